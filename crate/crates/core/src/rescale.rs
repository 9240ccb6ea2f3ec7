//! Cylindrical blow-down coordinates `ξ = e^{τ/2} z`, `τ = -log(-t)`,
//! `G = e^{τ/2} F - sqrt(2(n-2))`.

use serde::Serialize;

use crate::error::{check_dim, param, Error, Result};
use crate::flow::{Closure, ProfileState};
use crate::numerics::{gauss_legendre, Hermite};

/// Radius of the limiting cylinder, `sqrt(2(n-2))`.
pub fn neck_radius(n: usize) -> f64 {
    (2.0 * (n as f64 - 2.0)).sqrt()
}

/// Limit constant `c` in `(-τ)G → -c(ξ²-2)` for the parabolic profile.
pub fn neutral_constant(n: usize) -> f64 {
    neck_radius(n) / 8.0
}

/// The constant `1/(4 sqrt(2(n-2)))`; differs from [`neutral_constant`]
/// by the factor `n-2`, so the two agree only for `n = 3`.
pub fn neutral_constant_literal(n: usize) -> f64 {
    1.0 / (4.0 * neck_radius(n))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CylState {
    pub n: usize,
    pub tau: f64,
    pub xi_grid: Vec<f64>,
    pub g: Vec<f64>,
}

impl CylState {
    pub fn new(n: usize, tau: f64, xi_grid: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        check_dim(n)?;
        if xi_grid.len() != g.len() || xi_grid.len() < 3 {
            return Err(Error::Grid("need at least 3 matching ξ and G values".into()));
        }
        if xi_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid("ξ grid must be strictly increasing".into()));
        }
        let s = neck_radius(n);
        if let Some(i) = (0..g.len()).find(|&i| !(g[i] > -s)) {
            return Err(Error::Pinch { z: xi_grid[i] * (-tau / 2.0).exp(), t: -(-tau).exp() });
        }
        Ok(Self { n, tau, xi_grid, g })
    }

    pub fn t(&self) -> f64 {
        -(-self.tau).exp()
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    /// Natural cubic spline of G in ξ.
    pub fn spline(&self) -> Result<Hermite> {
        Hermite::spline(self.xi_grid.clone(), self.g.clone(), None)
    }

    /// Comma-separated `xi,G,G_xi` table, 17 significant digits.
    pub fn to_csv(&self) -> Result<String> {
        let sp = self.spline()?;
        let mut out = String::from("xi,G,G_xi\n");
        for (&x, &g) in self.xi_grid.iter().zip(&self.g) {
            out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", x, g, sp.deriv(x)));
        }
        Ok(out)
    }
}

fn check_time(t: f64) -> Result<f64> {
    if !(t < 0.0) {
        return Err(param("t", "must be negative"));
    }
    Ok(-(-t).ln())
}

/// Resamples G onto `points` uniform nodes of `[-xi_max, xi_max]` with the
/// monotone cubic interpolant of F.
pub fn to_cylindrical(state: &ProfileState, xi_max: f64, points: usize) -> Result<CylState> {
    let tau = check_time(state.t)?;
    if !(xi_max > 0.0) || points < 3 {
        return Err(param("xi_max", "need xi_max > 0 and at least 3 points"));
    }
    let scale = (tau / 2.0).exp();
    let z_max = xi_max / scale;
    let (lo, hi) = (state.z_grid[0], state.z_grid[state.len() - 1]);
    let inside = match state.closure {
        Closure::Caps => -z_max > lo && z_max < hi,
        Closure::Neumann => -z_max >= lo * (1.0 + 1e-14) && z_max <= hi * (1.0 + 1e-14),
    };
    if !inside {
        return Err(Error::Range(format!(
            "|ξ| <= {xi_max} needs |z| <= {z_max:.6e}, profile spans [{lo:.6e}, {hi:.6e}]"
        )));
    }
    let interp = state.interpolant();
    let s = neck_radius(state.n);
    let h = 2.0 * xi_max / (points - 1) as f64;
    let xi: Vec<f64> = (0..points).map(|i| -xi_max + i as f64 * h).collect();
    let g = xi
        .iter()
        .map(|&x| scale * interp.eval((x / scale).clamp(lo, hi)) - s)
        .collect();
    CylState::new(state.n, tau, xi, g)
}

/// G at the profile's own nodes (`ξ_i = e^{τ/2} z_i`), no interpolation.
pub fn native_cylindrical(state: &ProfileState) -> Result<CylState> {
    let tau = check_time(state.t)?;
    let scale = (tau / 2.0).exp();
    let s = neck_radius(state.n);
    let xi: Vec<f64> = state.z_grid.iter().map(|z| z * scale).collect();
    let g: Vec<f64> = state.f.iter().map(|f| scale * f - s).collect();
    if state.closure == Closure::Caps {
        // Tips sit at G = -s exactly; only the interior is checked.
        let last = g.len() - 1;
        if let Some(i) = (1..last).find(|&i| !(g[i] > -s)) {
            return Err(Error::Pinch { z: state.z_grid[i], t: state.t });
        }
        Ok(CylState { n: state.n, tau, xi_grid: xi, g })
    } else {
        CylState::new(state.n, tau, xi, g)
    }
}

/// Neumann-closed profile with `z = e^{-τ/2} ξ`, `F = e^{-τ/2}(G + s)`.
pub fn from_cylindrical(cyl: &CylState) -> Result<ProfileState> {
    let scale = (-cyl.tau / 2.0).exp();
    let s = neck_radius(cyl.n);
    let z = cyl.xi_grid.iter().map(|x| x * scale).collect();
    let f = cyl.g.iter().map(|g| scale * (g + s)).collect();
    ProfileState::new(cyl.n, cyl.t(), z, f, Closure::Neumann)
}

const GL_ORDER: usize = 8;

/// Residuals of the G equation at one interior snapshot of a history.
#[derive(Debug, Clone, Serialize)]
pub struct GStepResidual {
    pub tau: f64,
    /// sup of LHS - RHS, first form (nonlocal term `∫ G_ξξ/(s+G)`).
    pub first_form: f64,
    /// sup of LHS - RHS, second form (`G_ξ(0)/(s+G(0)) - ∫ G_ξ²/(s+G)²`).
    pub second_form: f64,
    /// sup of the pointwise difference between the two forms.
    pub form_gap: f64,
    /// sup of `E = G_τ - 𝓛G + G_ξ²/s + G²/(2s)`.
    pub e_sup: f64,
    /// `∫ e^{-ξ²/4} E (ξ²-2)` over the window.
    pub e_projection: f64,
    /// `‖P_0 G‖²` over the window, for comparison with `e_projection`.
    pub neutral_norm_sq: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GResidualReport {
    pub steps: Vec<GStepResidual>,
    pub max_first_form: f64,
    pub max_second_form: f64,
    pub max_form_gap: f64,
}

/// Gauss-Legendre integral of `f` over `[a, b]` split at the spline knots.
fn integrate_cells(knots: &[f64], a: f64, b: f64, gl: &(Vec<f64>, Vec<f64>), f: &dyn Fn(f64) -> f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut cuts = vec![lo];
    cuts.extend(knots.iter().copied().filter(|&k| k > lo && k < hi));
    cuts.push(hi);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (c, r) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
        total += gl.0.iter().zip(&gl.1).map(|(x, wt)| wt * f(c + r * x)).sum::<f64>() * r;
    }
    sign * total
}

/// Checks both forms of the G equation on consecutive triples of a
/// history. `G_τ` is the three-point difference of the neighbouring
/// splines at the middle snapshot's nodes; `G_ξ`, `G_ξξ` and the nonlocal
/// integrals come from the middle spline. Only nodes with `|ξ| <= window`
/// are reported.
pub fn g_equation_residual(history: &[CylState], window: f64) -> Result<GResidualReport> {
    if history.len() < 3 {
        return Err(Error::HistoryTooShort { need: 3, got: history.len() });
    }
    if history.windows(2).any(|w| !(w[1].tau > w[0].tau)) {
        return Err(param("history", "τ must increase"));
    }
    let n = history[0].n;
    if history.iter().any(|c| c.n != n) {
        return Err(param("history", "mixed dimensions"));
    }
    let nm = n as f64;
    let s = neck_radius(n);
    let gl = gauss_legendre(GL_ORDER);
    let splines = history.iter().map(|c| c.spline()).collect::<Result<Vec<_>>>()?;
    let mut steps = Vec::new();
    for k in 1..history.len() - 1 {
        let (ta, tb, tc) = (history[k - 1].tau, history[k].tau, history[k + 1].tau);
        let (h0, h1) = (tb - ta, tc - tb);
        let (wa, wb, wc) = (-h1 / (h0 * (h0 + h1)), (h1 - h0) / (h0 * h1), h0 / (h1 * (h0 + h1)));
        let mid = &splines[k];
        let cyl = &history[k];
        let u = |x: f64| s + mid.eval(x);
        let first_integrand = |x: f64| {
            let (g, _, gxx) = mid.eval3(x);
            gxx / (s + g)
        };
        let second_integrand = |x: f64| {
            let (g, gx, _) = mid.eval3(x);
            gx * gx / ((s + g) * (s + g))
        };
        let (g0, gx0, _) = mid.eval3(0.0);
        let boundary = gx0 / (s + g0);
        let (lo, hi) = (history[k - 1].xi_grid[0].max(history[k + 1].xi_grid[0]), {
            let a = &history[k - 1].xi_grid;
            let c = &history[k + 1].xi_grid;
            a[a.len() - 1].min(c[c.len() - 1])
        });
        let mut rep = GStepResidual {
            tau: tb,
            first_form: 0.0,
            second_form: 0.0,
            form_gap: 0.0,
            e_sup: 0.0,
            e_projection: 0.0,
            neutral_norm_sq: 0.0,
            points: 0,
        };
        let mut xs = Vec::new();
        let mut es = Vec::new();
        let mut gs = Vec::new();
        // Running integrals from 0 outwards in both directions.
        let nodes: Vec<usize> = (0..cyl.len())
            .filter(|&i| {
                let x = cyl.xi_grid[i];
                x.abs() <= window && x >= lo && x <= hi && u(x) > 0.0 && cyl.g[i] > -s
            })
            .collect();
        let mut cache: Vec<(f64, f64, f64)> = Vec::with_capacity(nodes.len());
        let origin = nodes.iter().position(|&i| cyl.xi_grid[i] >= 0.0).unwrap_or(nodes.len());
        cache.resize(nodes.len(), (0.0, 0.0, 0.0));
        for dir in [1isize, -1] {
            let (mut prev_x, mut i1, mut i2) = (0.0, 0.0, 0.0);
            let mut j = if dir > 0 { origin as isize } else { origin as isize - 1 };
            while j >= 0 && (j as usize) < nodes.len() {
                let x = cyl.xi_grid[nodes[j as usize]];
                i1 += integrate_cells(&mid.x, prev_x, x, &gl, &first_integrand);
                i2 += integrate_cells(&mid.x, prev_x, x, &gl, &second_integrand);
                cache[j as usize] = (x, i1, i2);
                prev_x = x;
                j += dir;
            }
        }
        for j in 0..nodes.len() {
            let (x, i1, i2) = cache[j];
            let (g, gx, gxx) = mid.eval3(x);
            let gt = wa * splines[k - 1].eval(x) + wb * g + wc * splines[k + 1].eval(x);
            let ug = s + g;
            let lin = gxx - 0.5 * x * gx + g;
            let quad = -g * g / (2.0 * ug);
            let rhs1 = lin + (nm - 2.0) * gx * gx / ug + quad - (nm - 1.0) * gx * i1;
            let rhs2 = lin - gx * gx / ug + quad + (nm - 1.0) * gx * (boundary - i2);
            let r1 = gt - rhs1;
            let r2 = gt - rhs2;
            let e = gt - lin + gx * gx / s + g * g / (2.0 * s);
            rep.first_form = rep.first_form.max(r1.abs());
            rep.second_form = rep.second_form.max(r2.abs());
            rep.form_gap = rep.form_gap.max((rhs1 - rhs2).abs());
            rep.e_sup = rep.e_sup.max(e.abs());
            xs.push(x);
            es.push(e);
            gs.push(g);
        }
        rep.points = xs.len();
        if xs.len() >= 2 {
            let wt = |x: f64| (-x * x / 4.0).exp();
            let pe: Vec<f64> = xs.iter().zip(&es).map(|(&x, &e)| wt(x) * e * (x * x - 2.0)).collect();
            let pg: Vec<f64> = xs.iter().zip(&gs).map(|(&x, &g)| wt(x) * g * (x * x - 2.0)).collect();
            rep.e_projection = crate::numerics::trapezoid(&xs, &pe);
            let c = crate::numerics::trapezoid(&xs, &pg);
            // ‖ξ²-2‖² = 16√π in the weighted space.
            let norm = 16.0 * crate::spectral::SQRT_PI;
            rep.neutral_norm_sq = c * c / norm;
        }
        steps.push(rep);
    }
    let max_of = |f: fn(&GStepResidual) -> f64| steps.iter().map(f).fold(0.0, f64::max);
    Ok(GResidualReport {
        max_first_form: max_of(|r| r.first_form),
        max_second_form: max_of(|r| r.second_form),
        max_form_gap: max_of(|r| r.form_gap),
        steps,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NeutralSnapshot {
    pub tau: f64,
    /// `sup |(-τ)G + c(ξ²-2)|` with `c = sqrt(2(n-2))/8`.
    pub deviation: f64,
    /// Same with `c = 1/(4 sqrt(2(n-2)))`.
    pub deviation_literal: f64,
    /// `(-τ)G` at `ξ = -√2` and `ξ = √2`.
    pub at_roots: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct NeutralReport {
    pub window: f64,
    pub snapshots: Vec<NeutralSnapshot>,
    /// Deviation non-increasing in `-τ` up to the relative tolerance.
    pub monotone: bool,
    pub monotone_literal: bool,
}

fn weakly_decreasing_in_minus_tau(snaps: &[(f64, f64)], tolerance: f64) -> bool {
    let mut v = snaps.to_vec();
    v.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    v.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + tolerance))
}

/// Compares `(-τ)G` with the neutral-mode profile on `|ξ| <= window`.
pub fn neutral_limit_check(history: &[CylState], window: f64, tolerance: f64) -> Result<NeutralReport> {
    let mut snapshots = Vec::with_capacity(history.len());
    for cyl in history {
        if !(cyl.tau < 0.0) {
            return Err(param("tau", "must be negative"));
        }
        let sp = cyl.spline()?;
        let mt = -cyl.tau;
        let (c, cl) = (neutral_constant(cyl.n), neutral_constant_literal(cyl.n));
        let (mut dev, mut devl) = (0.0f64, 0.0f64);
        for (&x, &g) in cyl.xi_grid.iter().zip(&cyl.g) {
            if x.abs() <= window {
                dev = dev.max((mt * g + c * (x * x - 2.0)).abs());
                devl = devl.max((mt * g + cl * (x * x - 2.0)).abs());
            }
        }
        let r = std::f64::consts::SQRT_2;
        snapshots.push(NeutralSnapshot {
            tau: cyl.tau,
            deviation: dev,
            deviation_literal: devl,
            at_roots: (mt * sp.eval(-r), mt * sp.eval(r)),
        });
    }
    let a: Vec<(f64, f64)> = snapshots.iter().map(|s| (s.tau, s.deviation)).collect();
    let b: Vec<(f64, f64)> = snapshots.iter().map(|s| (s.tau, s.deviation_literal)).collect();
    Ok(NeutralReport {
        window,
        monotone: weakly_decreasing_in_minus_tau(&a, tolerance),
        monotone_literal: weakly_decreasing_in_minus_tau(&b, tolerance),
        snapshots,
    })
}

/// Parabolic model `F²/2 = (n-2)[(-t) - (z²+2t)/(4 log(-t))]` as a CylState.
pub fn parabolic_model(n: usize, tau: f64, xi_max: f64, points: usize) -> Result<CylState> {
    check_dim(n)?;
    if !(tau < 0.0) {
        return Err(param("tau", "must be negative"));
    }
    let s = neck_radius(n);
    let h = 2.0 * xi_max / (points - 1) as f64;
    let xi: Vec<f64> = (0..points).map(|i| -xi_max + i as f64 * h).collect();
    let g = xi
        .iter()
        .map(|&x| s * (1.0 - (x * x - 2.0) / (4.0 * (-tau))).max(0.0).sqrt() - s)
        .collect();
    CylState::new(n, tau, xi, g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cylinder_gives_zero() {
        let st = ProfileState::cylinder(5, -100.0, 200.0, 101).unwrap();
        let c = to_cylindrical(&st, 8.0, 81).unwrap();
        assert!(c.g.iter().all(|g| g.abs() < 1e-13));
    }

    #[test]
    fn round_trip_on_shared_support() {
        let c = parabolic_model(4, -12.0, 6.0, 121).unwrap();
        let p = from_cylindrical(&c).unwrap();
        let back = native_cylindrical(&p).unwrap();
        for (a, b) in c.g.iter().zip(&back.g) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in c.xi_grid.iter().zip(&back.xi_grid) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn range_error() {
        let st = ProfileState::cylinder(4, -1.0, 2.0, 101).unwrap();
        assert!(matches!(to_cylindrical(&st, 8.0, 81), Err(Error::Range(_))));
    }

    #[test]
    fn two_forms_agree() {
        let hist: Vec<CylState> = (0..3).map(|k| parabolic_model(5, -12.0 + 0.01 * k as f64, 6.5, 131).unwrap()).collect();
        let r = g_equation_residual(&hist, 5.0).unwrap();
        assert!(r.max_form_gap < 1e-12, "{}", r.max_form_gap);
    }

    #[test]
    fn short_history() {
        let c = parabolic_model(4, -10.0, 4.0, 41).unwrap();
        assert!(matches!(
            g_equation_residual(&[c.clone(), c], 2.0),
            Err(Error::HistoryTooShort { need: 3, got: 2 })
        ));
    }
}
