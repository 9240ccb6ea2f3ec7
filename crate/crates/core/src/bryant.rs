//! The rotationally symmetric steady soliton in dimension n, normalized to
//! scalar curvature 1 at the tip.
//!
//! The metric is `dr²/Φ(r) + r² g_{S^{n-1}}`; Φ solves
//! `Φ Φ'' - Φ'²/2 + (n-2-Φ) Φ'/r + 2(n-2) Φ (1-Φ)/r² = 0` with `Φ(0) = 1`.

use serde::Serialize;

use crate::error::{check_dim, param, Error, Result};
use crate::numerics::{dopri45, Hermite, StepControl};

/// Radius below which Φ is taken from its power series.
pub const SERIES_RADIUS: f64 = 1e-2;
const SERIES_TERMS: usize = 10;
const FIRST_NODE: f64 = 1e-3;

/// Φ(r) and Φ'(r) tabulated on a geometric grid (plus the node r = 0).
#[derive(Debug, Clone, Serialize)]
pub struct BryantProfile {
    pub n: usize,
    pub r_grid: Vec<f64>,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub series_radius: f64,
    /// Coefficients p_k of Φ = Σ p_k r^{2k}.
    pub series: Vec<f64>,
    #[serde(skip)]
    interp: Hermite,
}

/// Arclength parametrization `dz² + B(z)² g_{S^{n-1}}` of the same metric.
#[derive(Debug, Clone, Serialize)]
pub struct BryantArc {
    pub n: usize,
    pub z_grid: Vec<f64>,
    pub b: Vec<f64>,
    pub db: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Curvature {
    pub r: f64,
    pub k_orb: f64,
    pub k_rad: f64,
    pub scalar: f64,
}

/// Power-series coefficients of Φ in powers of r², from the recursion the ODE
/// imposes once p_0 = 1 and p_1 = -1/(n(n-1)) are fixed.
pub fn series_coefficients(n: usize, terms: usize) -> Vec<f64> {
    let nf = n as f64;
    let mut p = vec![0.0; terms.max(2)];
    p[0] = 1.0;
    p[1] = -1.0 / (nf * (nf - 1.0));
    for m in 2..p.len() {
        let mf = m as f64;
        let coef = 4.0 * mf * mf + 2.0 * mf * (nf - 4.0) - 2.0 * (nf - 2.0);
        let mut rest = 0.0;
        for i in 1..m {
            let j = m - i;
            let (fi, fj) = (i as f64, j as f64);
            let pp = p[i] * p[j];
            rest += pp
                * (2.0 * fj * (2.0 * fj - 1.0) - 2.0 * fi * fj - 2.0 * fj - 2.0 * (nf - 2.0));
        }
        p[m] = -rest / coef;
    }
    p
}

fn series_eval(p: &[f64], r: f64) -> (f64, f64) {
    let x = r * r;
    let v = p.iter().rev().fold(0.0, |acc, c| acc * x + c);
    let d = p.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, c)| acc * x + 2.0 * k as f64 * c);
    (v, d * r)
}

/// Second derivative of Φ isolated from the ODE.
pub fn phi_second(n: usize, r: f64, phi: f64, dphi: f64) -> f64 {
    let nf = n as f64;
    (0.5 * dphi * dphi - (nf - 2.0 - phi) * dphi / r - 2.0 * (nf - 2.0) * phi * (1.0 - phi) / (r * r)) / phi
}

/// Grid density used by [`solve_bryant`].
pub const POINTS_PER_DECADE: usize = 200;

pub fn solve_bryant(n: usize, r_max: f64, tol: f64) -> Result<BryantProfile> {
    solve_bryant_with(n, r_max, tol, POINTS_PER_DECADE)
}

pub fn solve_bryant_with(n: usize, r_max: f64, tol: f64, points_per_decade: usize) -> Result<BryantProfile> {
    check_dim(n)?;
    if !(r_max > 1.0) {
        return Err(param("r_max", "must exceed 1"));
    }
    if !(tol > 0.0) {
        return Err(param("tol", "must be positive"));
    }
    if points_per_decade < 4 {
        return Err(param("points_per_decade", "need at least 4"));
    }
    let series = series_coefficients(n, SERIES_TERMS);
    let q = 10f64.powf(1.0 / points_per_decade as f64);

    let mut r_grid = vec![0.0];
    let mut phi = vec![1.0];
    let mut dphi = vec![0.0];
    let mut r = FIRST_NODE;
    while r < SERIES_RADIUS * (1.0 - 1e-12) {
        let (v, d) = series_eval(&series, r);
        r_grid.push(r);
        phi.push(v);
        dphi.push(d);
        r *= q;
    }
    let (v0, d0) = series_eval(&series, SERIES_RADIUS);
    r_grid.push(SERIES_RADIUS);
    phi.push(v0);
    dphi.push(d0);

    let ctl = StepControl { rtol: tol, atol: tol * 1e-6, h_init: 1e-3, max_steps: 5_000_000 };
    let mut y = [v0, d0];
    let mut r_prev = SERIES_RADIUS;
    let mut h = ctl.h_init;
    let mut k = 1usize;
    loop {
        let r_next = (SERIES_RADIUS * q.powi(k as i32)).min(r_max);
        let out = dopri45(
            |rr, s: &[f64; 2]| [s[1], phi_second(n, rr, s[0], s[1])],
            r_prev,
            y,
            r_next,
            StepControl { h_init: h, ..ctl },
        )
        .map_err(|e| match e {
            Error::NonConvergence { reached, .. } => Error::NonConvergence { reached, target: r_max },
            other => other,
        })?;
        y = out.y;
        h = out.h_last;
        if !(y[0] > 0.0) || !y[0].is_finite() {
            return Err(Error::NonConvergence { reached: r_next, target: r_max });
        }
        r_grid.push(r_next);
        phi.push(y[0]);
        dphi.push(y[1]);
        r_prev = r_next;
        if r_next >= r_max {
            break;
        }
        k += 1;
    }
    let interp = Hermite::new(r_grid.clone(), phi.clone(), dphi.clone());
    Ok(BryantProfile { n, r_grid, phi, dphi, series_radius: SERIES_RADIUS, series, interp })
}

impl BryantProfile {
    pub fn r_max(&self) -> f64 {
        *self.r_grid.last().unwrap()
    }

    /// (Φ, Φ') at `r`, or `None` beyond the tabulated range.
    pub fn eval(&self, r: f64) -> Option<(f64, f64)> {
        let r = r.abs();
        if r <= self.series_radius {
            return Some(series_eval(&self.series, r));
        }
        if r > self.r_max() {
            return None;
        }
        let (v, d, _) = self.interp.eval3(r);
        Some((v, d))
    }

    /// Φ(r); beyond the grid a two-term tail `c r^-2 + d r^-4` is matched to
    /// the last node.
    pub fn phi_at(&self, r: f64) -> f64 {
        match self.eval(r) {
            Some((v, _)) => v,
            None => {
                let (c, d) = self.tail_fit();
                c / (r * r) + d / r.powi(4)
            }
        }
    }

    pub fn dphi_at(&self, r: f64) -> f64 {
        match self.eval(r) {
            Some((_, d)) => d,
            None => {
                let (c, d) = self.tail_fit();
                -2.0 * c / r.powi(3) - 4.0 * d / r.powi(5)
            }
        }
    }

    fn tail_fit(&self) -> (f64, f64) {
        let m = self.r_grid.len() - 1;
        let (r, p, dp) = (self.r_grid[m], self.phi[m], self.dphi[m]);
        // Solve c/r² + d/r⁴ = p and -2c/r³ - 4d/r⁵ = dp.
        let d = -(r.powi(5) * dp + 2.0 * r.powi(4) * p) / 2.0;
        let c = (p - d / r.powi(4)) * r * r;
        (c, d)
    }

    pub fn curvature_at(&self, r: f64) -> Curvature {
        let nf = self.n as f64;
        let (k_orb, k_rad) = if r <= self.series_radius {
            // (1-Φ)/r² and -Φ'/(2r) straight from the series, no cancellation.
            let x = r * r;
            let mut ko = 0.0;
            let mut kr = 0.0;
            for (k, c) in self.series.iter().enumerate().skip(1).rev() {
                ko = ko * x - c;
                kr = kr * x - k as f64 * c;
            }
            (ko, kr)
        } else {
            let p = self.phi_at(r);
            let dp = self.dphi_at(r);
            ((1.0 - p) / (r * r), -dp / (2.0 * r))
        };
        Curvature {
            r,
            k_orb,
            k_rad,
            scalar: (nf - 1.0) * (nf - 2.0) * k_orb + 2.0 * (nf - 1.0) * k_rad,
        }
    }

    /// Maximum over nodes beyond the series radius of the ODE residual with
    /// Φ'' replaced by a centered difference of Φ', relative to |Φ''|+|Φ'|/r.
    pub fn ode_residual(&self) -> f64 {
        let start = self.r_grid.iter().position(|&r| r >= self.series_radius).unwrap_or(1) + 1;
        let mut worst = 0.0f64;
        for i in start..self.r_grid.len() - 1 {
            let (r0, r1, r2) = (self.r_grid[i - 1], self.r_grid[i], self.r_grid[i + 1]);
            let (d0, d1, d2) = (self.dphi[i - 1], self.dphi[i], self.dphi[i + 1]);
            let (h0, h1) = (r1 - r0, r2 - r1);
            let fd = (h0 * h0 * d2 - h1 * h1 * d0 + (h1 * h1 - h0 * h0) * d1) / (h0 * h1 * (h0 + h1));
            let exact = phi_second(self.n, r1, self.phi[i], d1);
            let scale = exact.abs() + d1.abs() / r1;
            worst = worst.max((fd - exact).abs() / scale);
        }
        worst
    }

    /// `r Φ' + 2Φ - 2 (n-5)/(n-2) Φ²` at `r`.
    pub fn decay_combination(&self, r: f64) -> f64 {
        let nf = self.n as f64;
        let p = self.phi_at(r);
        r * self.dphi_at(r) + 2.0 * p - 2.0 * (nf - 5.0) / (nf - 2.0) * p * p
    }
}

pub fn curvatures(profile: &BryantProfile) -> Vec<Curvature> {
    profile.r_grid.iter().map(|&r| profile.curvature_at(r)).collect()
}

/// Large-r constants measured on a solved profile.
#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticSummary {
    pub n: usize,
    pub r_large: f64,
    pub r2_phi_large: f64,
    pub r2_phi_limit_expected: f64,
    /// r⁴ (Φ - (n-2)² r⁻²) at `r_large` and at the last node.
    pub c2_large: f64,
    pub c2_last: f64,
    /// r⁴ (r Φ' + 2Φ - 2(n-5)/(n-2) Φ²) at `r_large` and at the last node.
    pub decay_large: f64,
    pub decay_last: f64,
    pub k_orb_tip: f64,
    pub k_rad_tip: f64,
    pub scalar_tip: f64,
    pub ode_residual: f64,
}

pub fn asymptotic_summary(profile: &BryantProfile, r_large: f64) -> AsymptoticSummary {
    let nf = profile.n as f64;
    let c0 = (nf - 2.0).powi(2);
    let last = profile.r_max();
    let r_large = r_large.min(last);
    let c2 = |r: f64| r.powi(4) * (profile.phi_at(r) - c0 / (r * r));
    let tip = profile.curvature_at(0.0);
    AsymptoticSummary {
        n: profile.n,
        r_large,
        r2_phi_large: r_large * r_large * profile.phi_at(r_large),
        r2_phi_limit_expected: c0,
        c2_large: c2(r_large),
        c2_last: c2(last),
        decay_large: r_large.powi(4) * profile.decay_combination(r_large),
        decay_last: last.powi(4) * profile.decay_combination(last),
        k_orb_tip: tip.k_orb,
        k_rad_tip: tip.k_rad,
        scalar_tip: tip.scalar,
        ode_residual: profile.ode_residual(),
    }
}

/// Default arclength spacing for [`to_arclength`].
pub fn default_arc_step(z_max: f64) -> f64 {
    (z_max / 4000.0).clamp(0.01, 0.125)
}

pub fn to_arclength(profile: &BryantProfile, z_max: f64) -> Result<BryantArc> {
    to_arclength_with(profile, z_max, default_arc_step(z_max))
}

/// Integrates `B' = sqrt(Φ(B))`, `B(0) = 0` on a uniform z grid.
pub fn to_arclength_with(profile: &BryantProfile, z_max: f64, dz: f64) -> Result<BryantArc> {
    if !(z_max > 0.0) || !(dz > 0.0) {
        return Err(param("z_max", "z_max and dz must be positive"));
    }
    let m = (z_max / dz).ceil() as usize;
    let dz = z_max / m as f64;
    let ctl = StepControl { rtol: 1e-12, atol: 1e-14, h_init: dz * 0.25, max_steps: 1_000_000 };
    let mut z_grid = Vec::with_capacity(m + 1);
    let mut b = Vec::with_capacity(m + 1);
    let mut db = Vec::with_capacity(m + 1);
    z_grid.push(0.0);
    b.push(0.0);
    db.push(1.0);
    let mut y = [0.0];
    let mut h = ctl.h_init;
    let r_max = profile.r_max();
    for k in 1..=m {
        let (za, zb) = ((k - 1) as f64 * dz, k as f64 * dz);
        let out = dopri45(
            |_, s: &[f64; 1]| [profile.phi_at(s[0].min(r_max)).max(0.0).sqrt()],
            za,
            y,
            zb,
            StepControl { h_init: h, ..ctl },
        )?;
        y = out.y;
        h = out.h_last;
        if y[0] > r_max {
            return Err(Error::Range(format!(
                "profile range r <= {r_max} exhausted at z = {zb} before z_max = {z_max}"
            )));
        }
        z_grid.push(zb);
        b.push(y[0]);
        db.push(profile.phi_at(y[0]).sqrt());
    }
    Ok(BryantArc { n: profile.n, z_grid, b, db })
}

impl BryantArc {
    /// (B(z), B'(z)) by cubic Hermite interpolation.
    pub fn eval(&self, z: f64) -> (f64, f64) {
        let i = crate::numerics::locate(&self.z_grid, z);
        let h = self.z_grid[i + 1] - self.z_grid[i];
        let s = ((z - self.z_grid[i]) / h).clamp(0.0, 1.0);
        let (y0, y1, m0, m1) = (self.b[i], self.b[i + 1], self.db[i] * h, self.db[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * m1;
        let d = ((6.0 * s2 - 6.0 * s) * y0 + (3.0 * s2 - 4.0 * s + 1.0) * m0 + (-6.0 * s2 + 6.0 * s) * y1 + (3.0 * s2 - 2.0 * s) * m1) / h;
        (v, d)
    }

    /// `(B²/2)'' - α (B')⁴` at interior nodes via centered differences.
    pub fn concavity_values(&self, alpha: f64) -> Vec<(f64, f64)> {
        let h = self.z_grid[1] - self.z_grid[0];
        (1..self.z_grid.len() - 1)
            .map(|i| {
                let q = |j: usize| 0.5 * self.b[j] * self.b[j];
                let second = (q(i + 1) - 2.0 * q(i) + q(i - 1)) / (h * h);
                (self.b[i], second - alpha * self.db[i].powi(4))
            })
            .collect()
    }
}

/// Smallest grid aperture L0 such that `(B²/2)'' - α(B')⁴ < 0` at every node
/// with `B² >= L0²/4`.
pub fn concavity_threshold(arc: &BryantArc, alpha: f64) -> Result<f64> {
    let vals = concavity_values_checked(arc, alpha)?;
    let last_bad = vals.iter().rposition(|&(_, v)| v >= 0.0);
    match last_bad {
        None => Ok(2.0 * vals[0].0),
        Some(j) if j + 1 >= vals.len() => Err(Error::NotSatisfied(format!(
            "concavity fails up to the end of the arc (B = {})",
            vals[j].0
        ))),
        Some(j) => Ok(2.0 * vals[j + 1].0),
    }
}

fn concavity_values_checked(arc: &BryantArc, alpha: f64) -> Result<Vec<(f64, f64)>> {
    if arc.z_grid.len() < 3 {
        return Err(param("arc", "need at least three nodes"));
    }
    Ok(arc.concavity_values(alpha))
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub s: f64,
    pub eta: f64,
    pub max_ratio: f64,
    pub holds: bool,
    /// χ(r) = r⁻²(Φ⁻¹ - 1) at the first positive node and at the last node.
    pub chi_small_r: f64,
    pub chi_large_r: f64,
}

/// Compares `|Φ((1+s)r)⁻¹ - Φ(r)⁻¹|` with `η (Φ(r)⁻¹ - 1)` on the grid.
pub fn profile_stability_check(profile: &BryantProfile, s: f64, eta: f64) -> StabilityReport {
    let mut max_ratio = 0.0f64;
    for &r in profile.r_grid.iter().skip(1) {
        let rs = (1.0 + s) * r;
        if rs > profile.r_max() || rs <= 0.0 {
            continue;
        }
        let inv = 1.0 / profile.phi_at(r);
        let lhs = (1.0 / profile.phi_at(rs) - inv).abs();
        let rhs = eta * (inv - 1.0);
        if rhs > 0.0 {
            max_ratio = max_ratio.max(lhs / rhs);
        }
    }
    let chi = |r: f64| (1.0 / profile.phi_at(r) - 1.0) / (r * r);
    StabilityReport {
        s,
        eta,
        max_ratio,
        holds: max_ratio <= 1.0,
        chi_small_r: chi(profile.r_grid[1]),
        chi_large_r: chi(profile.r_max()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_leading_terms() {
        let p = series_coefficients(4, 6);
        assert_eq!(p[0], 1.0);
        assert!((p[1] + 1.0 / 12.0).abs() < 1e-16);
        let (v, _) = series_eval(&p, 0.1);
        assert!((v - (1.0 - 0.01 / 12.0)).abs() < 1e-6);
    }

    #[test]
    fn series_satisfies_ode() {
        for n in [4usize, 5, 7] {
            let p = series_coefficients(n, SERIES_TERMS);
            let r = 0.05;
            let (v, d) = series_eval(&p, r);
            // second derivative of the series
            let x = r * r;
            let dd: f64 = p
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| {
                    let k = k as f64;
                    2.0 * k * (2.0 * k - 1.0) * c * x.powf(k - 1.0)
                })
                .sum();
            assert!((dd - phi_second(n, r, v, d)).abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn rejects_low_dimension() {
        assert!(matches!(solve_bryant(3, 10.0, 1e-8), Err(Error::Dimension(3))));
    }

    #[test]
    fn arc_starts_with_unit_slope() {
        let p = solve_bryant(4, 20.0, 1e-10).unwrap();
        let arc = to_arclength_with(&p, 1.0, 0.01).unwrap();
        assert!((arc.b[1] - 0.01).abs() < 1e-7);
        assert!((arc.db[0] - 1.0).abs() < 1e-15);
    }
}
