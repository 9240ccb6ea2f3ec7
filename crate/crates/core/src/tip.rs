//! Tip-region coordinates: the inverse branch `ξ_±(ρ)` of
//! `ρ = e^{τ/2} F(e^{-τ/2} ξ)`, `V_± = |F_z|` along it, the weights `μ_±`
//! and the weighted Poincaré inequality on `ρ ≤ 2θ`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bryant::BryantProfile;
use crate::error::{param, Error, Result};
use crate::flow::{CapFit, Closure, ProfileState, CAP_FIT_NODES};
use crate::numerics::{smoothstep, smoothstep_d1, trapezoid, Hermite};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Serialize)]
pub struct TipProfile {
    pub side: Side,
    pub n: usize,
    pub tau: f64,
    pub rho_grid: Vec<f64>,
    pub v: Vec<f64>,
    pub xi: Vec<f64>,
    /// `∂_ρ(ξ²/4)`.
    pub dxi2: Vec<f64>,
    /// `∂²_ρ(ξ²/4)`.
    pub d2xi2: Vec<f64>,
    /// Largest ρ on the branch (`ρ` at `|ξ| = 2`).
    pub rho_max: f64,
}

/// Branch nodes as `(ρ, ξ, dξ/dρ)` for the `+` orientation (ξ > 0), tip first.
fn branch_nodes(state: &ProfileState, side: Side) -> Result<Vec<(f64, f64, f64)>> {
    if state.closure != Closure::Caps {
        return Err(param("closure", "tip profiles need a closed profile"));
    }
    if !(state.t < 0.0) {
        return Err(param("t", "must be negative"));
    }
    let scale = (-state.t).sqrt().recip();
    let h = state.spacing();
    let fz = state.fz();
    let m = state.len();
    let mut z: Vec<f64> = state.z_grid.clone();
    let mut f: Vec<f64> = state.f.clone();
    let mut d: Vec<f64> = fz.clone();
    if side == Side::Minus {
        z.reverse();
        f.reverse();
        d.reverse();
        z.iter_mut().for_each(|v| *v = -*v);
        d.iter_mut().for_each(|v| *v = -*v);
    }
    let start = 2.0 * (-state.t).sqrt();
    let first = z.iter().position(|&x| x >= start).ok_or_else(|| Error::Range("no branch beyond |z| = 2 sqrt(-t)".into()))?;
    if m - first < 4 {
        return Err(Error::Range("branch has fewer than 4 nodes".into()));
    }
    let tail: Vec<f64> = f[m - 1 - CAP_FIT_NODES..].iter().rev().cloned().collect();
    let tip_slope = CapFit::new(&tail, h).slope();
    d[m - 1] = -tip_slope;
    for i in first..m - 1 {
        if !(f[i + 1] < f[i]) || !(d[i] < 0.0) {
            return Err(Error::Monotonicity { lo: z[i], hi: z[i + 1] });
        }
    }
    Ok((first..m).rev().map(|i| (scale * f[i], scale * z[i], 1.0 / d[i])).collect())
}

/// Inverts the branch `|z| ≥ 2 sqrt(-t)` with a clamped cubic spline of ξ
/// in ρ and samples it on `points` geometric nodes of
/// `[rho_min_fraction · ρ_max, ρ_max]`.
pub fn compute_tip_profile(state: &ProfileState, side: Side, points: usize, rho_min_fraction: f64) -> Result<TipProfile> {
    if points < 4 || !(rho_min_fraction > 0.0 && rho_min_fraction < 1.0) {
        return Err(param("points", "need at least 4 points and a fraction in (0, 1)"));
    }
    let nodes = branch_nodes(state, side)?;
    let rho: Vec<f64> = nodes.iter().map(|p| p.0).collect();
    let xi: Vec<f64> = nodes.iter().map(|p| p.1).collect();
    let last = nodes.len() - 1;
    let sp = Hermite::spline(rho.clone(), xi, Some((nodes[0].2, nodes[last].2)))?;
    let rho_max = rho[last];
    let tau = -(-state.t).ln();
    let ratio = (1.0 / rho_min_fraction).powf(1.0 / (points - 1) as f64);
    let mut grid: Vec<f64> = (0..points).map(|k| rho_max * rho_min_fraction * ratio.powi(k as i32)).collect();
    grid[points - 1] = rho_max;
    let sign = if side == Side::Plus { 1.0 } else { -1.0 };
    let (mut v, mut xs, mut d1, mut d2) = (vec![], vec![], vec![], vec![]);
    for &r in &grid {
        let (x, dx, ddx) = sp.eval3(r);
        v.push(1.0 / dx.abs());
        xs.push(sign * x);
        d1.push(0.5 * x * dx);
        d2.push(0.5 * (dx * dx + x * ddx));
    }
    Ok(TipProfile { side, n: state.n, tau, rho_grid: grid, v, xi: xs, dxi2: d1, d2xi2: d2, rho_max })
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightFn {
    pub n: usize,
    pub tau: f64,
    pub theta: f64,
    /// Samples on `ρ ≤ 2θ` from the tip profile's grid.
    pub rho_grid: Vec<f64>,
    pub zeta: Vec<f64>,
    pub mu: Vec<f64>,
    pub dmu: Vec<f64>,
    pub d2mu: Vec<f64>,
    pub v: Vec<f64>,
    /// `∂_ρ(ξ²/4)` carried over from the tip profile.
    pub dxi2: Vec<f64>,
    /// `Φ((-τ)^{1/2} ρ)`.
    pub phi: Vec<f64>,
    pub k_star: f64,
}

/// Quintic cutoff, 0 below θ/8 and 1 above θ/4, with its first two
/// derivatives in ρ.
pub fn zeta(theta: f64, rho: f64) -> (f64, f64, f64) {
    let (a, w) = (theta / 8.0, theta / 8.0);
    let x = (rho - a) / w;
    (smoothstep(x), smoothstep_d1(x) / w, crate::numerics::smoothstep_d2(x) / (w * w))
}

/// Builds `μ_±` on `ρ ≤ 2θ`. Integrals from ρ to θ are composite
/// trapezoid on the profile's ρ-grid; derivatives are exact in terms of
/// the spline of ξ and of Φ.
pub fn weight_mu(tip: &TipProfile, theta: f64, bryant: &BryantProfile) -> Result<WeightFn> {
    if !(theta > 0.0 && 2.0 * theta <= tip.rho_max) {
        return Err(param("theta", format!("need 0 < θ <= ρ_max/2 = {}", tip.rho_max / 2.0)));
    }
    if bryant.n != tip.n {
        return Err(param("bryant", "dimension differs from the tip profile"));
    }
    let mt = -tip.tau;
    if !(mt > 0.0) {
        return Err(param("tau", "must be negative"));
    }
    let sq = mt.sqrt();
    if sq * 2.0 * theta > bryant.r_max() {
        return Err(Error::Range(format!(
            "Φ needed up to r = {}, table ends at {}",
            sq * 2.0 * theta,
            bryant.r_max()
        )));
    }
    let nn = tip.n as f64;
    let keep: Vec<usize> = (0..tip.rho_grid.len()).filter(|&i| tip.rho_grid[i] <= 2.0 * theta * (1.0 + 1e-12)).collect();
    let rho: Vec<f64> = keep.iter().map(|&i| tip.rho_grid[i]).collect();
    let xi2: Vec<f64> = keep.iter().map(|&i| tip.xi[i] * tip.xi[i] / 4.0).collect();
    let d1: Vec<f64> = keep.iter().map(|&i| tip.dxi2[i]).collect();
    let dd: Vec<f64> = keep.iter().map(|&i| tip.d2xi2[i]).collect();
    let v: Vec<f64> = keep.iter().map(|&i| tip.v[i]).collect();
    let m = rho.len();
    let z: Vec<(f64, f64, f64)> = rho.iter().map(|&r| zeta(theta, r)).collect();
    let phi: Vec<f64> = rho.iter().map(|&r| bryant.phi_at(sq * r)).collect();
    let dphi: Vec<f64> = rho.iter().map(|&r| bryant.dphi_at(sq * r)).collect();
    // Integrand of dμ/dρ with the ζ' pieces cancelled.
    let g1: Vec<f64> = (0..m).map(|i| z[i].1 * xi2[i]).collect();
    let g2: Vec<f64> = (0..m).map(|i| (1.0 - z[i].0) * (1.0 / phi[i] - 1.0) / rho[i]).collect();
    // ∫_ρ^θ via cumulative trapezoid from the node nearest θ.
    let cum = |g: &[f64]| {
        let mut c = vec![0.0; m];
        for i in 1..m {
            c[i] = c[i - 1] + 0.5 * (g[i] + g[i - 1]) * (rho[i] - rho[i - 1]);
        }
        let it = crate::numerics::locate(&rho, theta);
        let frac = (theta - rho[it]) / (rho[it + 1] - rho[it]);
        let at_theta = c[it] + frac * (c[it + 1] - c[it]);
        c.iter().map(|ci| at_theta - ci).collect::<Vec<f64>>()
    };
    let i1 = cum(&g1);
    let i2 = cum(&g2);
    let mu: Vec<f64> = (0..m).map(|i| -z[i].0 * xi2[i] - i1[i] - (nn - 2.0) * i2[i]).collect();
    let dmu: Vec<f64> = (0..m).map(|i| -z[i].0 * d1[i] + (nn - 2.0) * g2[i]).collect();
    let d2mu: Vec<f64> = (0..m)
        .map(|i| {
            let (zt, zp, _) = z[i];
            let r = rho[i];
            let a = 1.0 / phi[i] - 1.0;
            -zt * dd[i] - zp * d1[i] - (nn - 2.0) * (1.0 - zt + r * zp) * a / (r * r)
                - (nn - 2.0) * (1.0 - zt) * sq * dphi[i] / (phi[i] * phi[i] * r)
        })
        .collect();
    let mut w = WeightFn {
        n: tip.n,
        tau: tip.tau,
        theta,
        rho_grid: rho,
        zeta: z.iter().map(|p| p.0).collect(),
        mu,
        dmu,
        d2mu,
        v,
        dxi2: d1,
        phi,
        k_star: 0.0,
    };
    w.k_star = mu_second_derivative_check(&w).k_star;
    Ok(w)
}

#[derive(Debug, Clone, Serialize)]
pub struct SecondDerivativeReport {
    /// Smallest `K_*` with `μ'' <= μ'²/4 + K_* ρ⁻²/4` on the samples.
    pub k_star: f64,
    pub rho_at_max: f64,
    pub points_per_decade: f64,
    /// Largest `|μ' - (n-2)ρ⁻¹(V⁻²-1)| / (ρ⁻¹(V⁻²-1))`.
    pub derivative_eta: f64,
}

pub fn mu_second_derivative_check(w: &WeightFn) -> SecondDerivativeReport {
    let nn = w.n as f64;
    let (mut k, mut arg, mut eta) = (0.0f64, 0.0, 0.0f64);
    for i in 0..w.rho_grid.len() {
        let r = w.rho_grid[i];
        let need = 4.0 * r * r * (w.d2mu[i] - 0.25 * w.dmu[i] * w.dmu[i]);
        if need > k {
            k = need;
            arg = r;
        }
        let base = (w.v[i].powi(-2) - 1.0) / r;
        if base > 0.0 {
            eta = eta.max((w.dmu[i] - (nn - 2.0) * base).abs() / base);
        }
    }
    let decades = (w.rho_grid[w.rho_grid.len() - 1] / w.rho_grid[0]).log10();
    SecondDerivativeReport {
        k_star: k,
        rho_at_max: arg,
        points_per_decade: (w.rho_grid.len() - 1) as f64 / decades.max(f64::MIN_POSITIVE),
        derivative_eta: eta,
    }
}

/// `f(ρ) = Σ a_j ρ^{p_j} exp(-((ρ-c_j)/w_j)²)`, so `f(0) = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct TestFunction {
    pub terms: Vec<(f64, i32, f64, f64)>,
}

impl TestFunction {
    pub fn eval(&self, r: f64) -> (f64, f64) {
        let mut f = 0.0;
        let mut d = 0.0;
        for &(a, p, c, w) in &self.terms {
            let g = (-((r - c) / w).powi(2)).exp();
            let dg = -2.0 * (r - c) / (w * w) * g;
            let rp = r.powi(p);
            let drp = p as f64 * r.powi(p - 1);
            f += a * rp * g;
            d += a * (drp * g + rp * dg);
        }
        (f, d)
    }

    /// `lim_{ρ→0} f/ρ`.
    pub fn slope_at_zero(&self) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.1 == 1)
            .map(|&(a, _, c, w)| a * (-(c / w).powi(2)).exp())
            .sum()
    }
}

/// Seeded random bumps centred in `[0, 2θ]` with widths in `[θ/20, θ]`.
pub fn random_test_functions(seed: u64, count: usize, theta: f64) -> Vec<TestFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let k = rng.gen_range(1..=3);
            let terms = (0..k)
                .map(|_| {
                    (
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(1..=2),
                        rng.gen_range(0.0..2.0 * theta),
                        theta * rng.gen_range(0.05..1.0),
                    )
                })
                .collect();
            TestFunction { terms }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PoincareCase {
    pub lhs: f64,
    pub gradient_term: f64,
    pub hardy_term: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PoincareReport {
    pub k_star: f64,
    pub cases: Vec<PoincareCase>,
    pub violations: usize,
    /// Smallest `rhs / lhs` over cases with `lhs > 0`.
    pub min_ratio: f64,
}

/// `∫ μ'² f² e^{-μ} <= 8 ∫ f'² e^{-μ} + K_* ∫ ρ⁻² f² e^{-μ}` over `[0, 2θ]`.
/// The interval below the first sample is closed with `V = 1`, `f ~ f'(0)ρ`.
pub fn poincare_check(w: &WeightFn, functions: &[TestFunction]) -> PoincareReport {
    let mut rho = vec![0.0];
    rho.extend_from_slice(&w.rho_grid);
    let e: Vec<f64> = std::iter::once(w.mu[0]).chain(w.mu.iter().cloned()).map(|m| (-m).exp()).collect();
    let dmu: Vec<f64> = std::iter::once(0.0).chain(w.dmu.iter().cloned()).collect();
    let mut cases = Vec::with_capacity(functions.len());
    for tf in functions {
        let mut a = Vec::with_capacity(rho.len());
        let mut b = Vec::with_capacity(rho.len());
        let mut c = Vec::with_capacity(rho.len());
        for (i, &r) in rho.iter().enumerate() {
            let (f, d) = if r == 0.0 { (0.0, tf.eval(0.0).1) } else { tf.eval(r) };
            let hardy = if r == 0.0 { tf.slope_at_zero().powi(2) } else { f * f / (r * r) };
            a.push(dmu[i] * dmu[i] * f * f * e[i]);
            b.push(d * d * e[i]);
            c.push(hardy * e[i]);
        }
        let lhs = trapezoid(&rho, &a);
        let g = trapezoid(&rho, &b);
        let hd = trapezoid(&rho, &c);
        let rhs = 8.0 * g + w.k_star * hd;
        cases.push(PoincareCase { lhs, gradient_term: g, hardy_term: hd, rhs, holds: lhs <= rhs });
    }
    PoincareReport {
        k_star: w.k_star,
        violations: cases.iter().filter(|c| !c.holds).count(),
        min_ratio: cases.iter().filter(|c| c.lhs > 0.0).map(|c| c.rhs / c.lhs).fold(f64::INFINITY, f64::min),
        cases,
    }
}

/// Tip-region monitors on one profile.
#[derive(Debug, Clone, Serialize)]
pub struct TipMonitor {
    /// Range of `V (-τ)^{1/2}` on the requested ρ-interval.
    pub v_scaled_min: f64,
    pub v_scaled_max: f64,
    pub rho_range: (f64, f64),
    /// Largest `|V⁻² - Φ((-τ)^{1/2}ρ)⁻¹| / (V⁻² - 1)` on `ρ <= 2θ`, over
    /// samples with `V⁻² - 1 >= RESOLVED_EXCESS`.
    pub bryant_eta: f64,
    /// Largest `|∂_ρ(ξ²/4) + (n-2)ρ⁻¹(V⁻²-1)| / (ρ⁻¹(V⁻²-1))` on `[θ/8, 2θ]`.
    pub xi_identity_eta: f64,
    /// `max |∂_ρ(ξ²/4)| / (-τ)` on `[θ/8, 2θ]`.
    pub xi_derivative_constant: f64,
    /// Largest V on the grid (should not exceed 1).
    pub v_max: f64,
}

/// Below this `V⁻² - 1` is at the level of the tip-slope error.
pub const RESOLVED_EXCESS: f64 = 1e-2;

pub fn tip_monitors(tip: &TipProfile, theta: f64, bryant: &BryantProfile, v_range: (f64, f64)) -> TipMonitor {
    let mt = -tip.tau;
    let sq = mt.sqrt();
    let nn = tip.n as f64;
    let mut m = TipMonitor {
        v_scaled_min: f64::INFINITY,
        v_scaled_max: 0.0,
        rho_range: (v_range.0.max(tip.rho_grid[0]), v_range.1.min(tip.rho_max)),
        bryant_eta: 0.0,
        xi_identity_eta: 0.0,
        xi_derivative_constant: 0.0,
        v_max: tip.v.iter().cloned().fold(0.0, f64::max),
    };
    for i in 0..tip.rho_grid.len() {
        let r = tip.rho_grid[i];
        let v = tip.v[i];
        if r >= m.rho_range.0 && r <= m.rho_range.1 {
            m.v_scaled_min = m.v_scaled_min.min(v * sq);
            m.v_scaled_max = m.v_scaled_max.max(v * sq);
        }
        let excess = v.powi(-2) - 1.0;
        if r <= 2.0 * theta && excess >= RESOLVED_EXCESS {
            let phi = bryant.phi_at(sq * r);
            m.bryant_eta = m.bryant_eta.max((v.powi(-2) - 1.0 / phi).abs() / excess);
        }
        if r >= theta / 8.0 && r <= 2.0 * theta && excess > 0.0 {
            let base = excess / r;
            m.xi_identity_eta = m.xi_identity_eta.max((tip.dxi2[i] + (nn - 2.0) * base).abs() / base);
            m.xi_derivative_constant = m.xi_derivative_constant.max(tip.dxi2[i].abs() / mt);
        }
    }
    m
}

/// Comma-separated `rho,V,xi,mu` rows; μ is blank beyond 2θ.
pub fn tip_table(tip: &TipProfile, w: Option<&WeightFn>) -> String {
    let mut out = String::from("rho,V,xi,mu\n");
    for i in 0..tip.rho_grid.len() {
        let mu = w
            .and_then(|w| w.rho_grid.iter().position(|&r| r == tip.rho_grid[i]).map(|j| format!("{:.16e}", w.mu[j])))
            .unwrap_or_default();
        out.push_str(&format!("{:.16e},{:.16e},{:.16e},{}\n", tip.rho_grid[i], tip.v[i], tip.xi[i], mu));
    }
    out
}
