//! Comparison of two closed solutions: reparametrization triplets, the
//! shift ODE, difference functions in cylindrical (`ξ`) and tip (`ρ`)
//! coordinates, the error terms of the difference equation, mode killing
//! and the neutral-mode ODE.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::error::{check_dim, param, Error, Result};
use crate::flow::ProfileState;
use crate::numerics::{
    bisect, dopri45, gauss_legendre, lagrange_weights, locate, smoothstep,
    smoothstep_d1, smoothstep_d2, trapezoid, Hermite, StepControl,
};
use crate::rescale::neck_radius;
use crate::spectral::{SpectralSpace, WeightedFunction};
use crate::tip::{compute_tip_profile, Side, WeightFn};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReparamTriplet {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub t_star: f64,
}

/// Budget minus magnitude for each parameter; negative means violated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Admissibility {
    pub admissible: bool,
    pub alpha_margin: f64,
    pub beta_margin: f64,
    pub gamma_margin: f64,
}

impl ReparamTriplet {
    pub fn new(alpha: f64, beta: f64, gamma: f64, epsilon: f64, t_star: f64) -> Result<Self> {
        if !(t_star < -1.0) {
            return Err(param("t_star", "must be below -1 so that log(-t_star) > 0"));
        }
        if !(epsilon > 0.0) {
            return Err(param("epsilon", "must be positive"));
        }
        if ![alpha, beta, gamma].iter().all(|v| v.is_finite()) {
            return Err(param("triplet", "entries must be finite"));
        }
        Ok(Self { alpha, beta, gamma, epsilon, t_star })
    }

    pub fn identity(epsilon: f64, t_star: f64) -> Result<Self> {
        Self::new(0.0, 0.0, 0.0, epsilon, t_star)
    }

    pub fn tau_star(&self) -> f64 {
        -(-self.t_star).ln()
    }

    /// `(ε sqrt(-t*), ε(-t*)/log(-t*), ε log(-t*))`.
    pub fn budgets(&self) -> [f64; 3] {
        let m = -self.t_star;
        [self.epsilon * m.sqrt(), self.epsilon * m / m.ln(), self.epsilon * m.ln()]
    }

    pub fn params(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    pub fn with_params(&self, p: [f64; 3]) -> Self {
        Self { alpha: p[0], beta: p[1], gamma: p[2], ..*self }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self { epsilon, ..*self }
    }

    pub fn admissibility(&self) -> Admissibility {
        let b = self.budgets();
        let m = [b[0] - self.alpha.abs(), b[1] - self.beta.abs(), b[2] - self.gamma.abs()];
        Admissibility {
            admissible: m.iter().all(|&v| v >= 0.0),
            alpha_margin: m[0],
            beta_margin: m[1],
            gamma_margin: m[2],
        }
    }
}

/// Profile values at one `(z, t)`: `F`, `F_z`, `F_zz`, `F_t` and
/// `∫_0^z F_zz/F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowSample {
    pub f: f64,
    pub fz: f64,
    pub fzz: f64,
    pub ft: f64,
    pub nonlocal: f64,
}

/// A solution known on a time interval, evaluable off its native grid.
pub trait FlowHistory {
    fn n(&self) -> usize;
    fn t_range(&self) -> (f64, f64);
    fn sample(&self, z: f64, t: f64) -> Result<FlowSample>;
    /// z-interval where `sample` is defined at time t.
    fn support(&self, t: f64) -> Result<(f64, f64)>;
    /// `V_±(ρ, τ)` on the tip branch.
    fn tip_v(&self, side: Side, rho: f64, tau: f64) -> Result<f64>;
}

struct TipSpline {
    v: Hermite,
    lo: f64,
    hi: f64,
}

struct Snapshot {
    t: f64,
    tau: f64,
    z_lo: f64,
    z_hi: f64,
    spline: Hermite,
    /// `F_t` at fixed z from the equation.
    ft: Hermite,
    /// `∫_0^{z_i} F_zz/F` at the nodes.
    cum: Vec<f64>,
    tips: Option<[TipSpline; 2]>,
}

const GL_NODES: usize = 8;

fn ratio_integral(sp: &Hermite, gl: &(Vec<f64>, Vec<f64>), a: f64, b: f64) -> f64 {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    gl.0.iter()
        .zip(&gl.1)
        .map(|(&x, &w)| {
            let (f, _, fzz) = sp.eval3(c + h * x);
            w * fzz / f
        })
        .sum::<f64>()
        * h
}

impl Snapshot {
    fn new(state: &ProfileState, gl: &(Vec<f64>, Vec<f64>), tip_points: usize) -> Result<Self> {
        let z = &state.z_grid;
        let m = z.len();
        if !(z[0] < 0.0 && z[m - 1] > 0.0) {
            return Err(Error::Range(format!("z = 0 outside the profile at t = {}", state.t)));
        }
        let spline = Hermite::spline(z.clone(), state.f.clone(), None)?;
        let ft = Hermite::spline(z.clone(), state.time_derivative(), None)?;
        let j0 = locate(z, 0.0);
        let mut cum = vec![0.0; m];
        cum[j0] = ratio_integral(&spline, gl, 0.0, z[j0]);
        cum[j0 + 1] = ratio_integral(&spline, gl, 0.0, z[j0 + 1]);
        for i in j0 + 1..m - 1 {
            cum[i + 1] = cum[i] + ratio_integral(&spline, gl, z[i], z[i + 1]);
        }
        for i in (1..=j0).rev() {
            cum[i - 1] = cum[i] + ratio_integral(&spline, gl, z[i], z[i - 1]);
        }
        let tips = if tip_points == 0 {
            None
        } else {
            let mut out = Vec::with_capacity(2);
            for side in [Side::Plus, Side::Minus] {
                match compute_tip_profile(state, side, tip_points, 1e-3) {
                    Ok(tp) => {
                        let lo = tp.rho_grid[0];
                        let v = Hermite::spline(tp.rho_grid, tp.v, None)?;
                        out.push(TipSpline { v, lo, hi: tp.rho_max });
                    }
                    Err(_) => break,
                }
            }
            match (out.pop(), out.pop()) {
                (Some(minus), Some(plus)) => Some([plus, minus]),
                _ => None,
            }
        };
        Ok(Self {
            t: state.t,
            tau: -(-state.t).ln(),
            z_lo: z[0],
            z_hi: z[m - 1],
            spline,
            ft,
            cum,
            tips,
        })
    }

    fn check(&self, z: f64) -> Result<()> {
        if !(z >= self.z_lo && z <= self.z_hi) {
            return Err(Error::Range(format!("z = {z} outside [{}, {}] at t = {}", self.z_lo, self.z_hi, self.t)));
        }
        Ok(())
    }

    fn nonlocal(&self, z: f64, gl: &(Vec<f64>, Vec<f64>)) -> Result<f64> {
        self.check(z)?;
        let j = locate(&self.spline.x, z);
        Ok(self.cum[j] + ratio_integral(&self.spline, gl, self.spline.x[j], z))
    }

    fn tip(&self, side: Side, rho: f64) -> Result<f64> {
        let tips = self.tips.as_ref().ok_or_else(|| Error::Range(format!("no tip profile at t = {}", self.t)))?;
        let tp = &tips[if side == Side::Plus { 0 } else { 1 }];
        if !(rho >= tp.lo && rho <= tp.hi) {
            return Err(Error::Range(format!("rho = {rho} outside [{}, {}] at t = {}", tp.lo, tp.hi, self.t)));
        }
        Ok(tp.v.eval(rho))
    }
}

/// Interpolation of a recorded history: a C² spline in z per snapshot;
/// in t at fixed z, cubic Hermite between neighbouring snapshots using the
/// equation's `F_t`, and four-point Lagrange for the nonlocal integral and
/// the tip profiles.
pub struct SnapshotFlow {
    n: usize,
    snaps: Vec<Snapshot>,
    gl: (Vec<f64>, Vec<f64>),
}

impl SnapshotFlow {
    /// `tip_points = 0` skips the tip profiles.
    pub fn new(states: &[ProfileState], tip_points: usize) -> Result<Self> {
        if states.len() < 4 {
            return Err(Error::HistoryTooShort { need: 4, got: states.len() });
        }
        let n = states[0].n;
        check_dim(n)?;
        if states.windows(2).any(|w| !(w[1].t > w[0].t) || w[1].n != n) {
            return Err(param("states", "need one dimension and strictly increasing times"));
        }
        let gl = gauss_legendre(GL_NODES);
        let snaps = states.iter().map(|s| Snapshot::new(s, &gl, tip_points)).collect::<Result<Vec<_>>>()?;
        Ok(Self { n, snaps, gl })
    }

    pub fn times(&self) -> Vec<f64> {
        self.snaps.iter().map(|s| s.t).collect()
    }

    pub fn len(&self) -> usize {
        self.snaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snaps.is_empty()
    }

    pub fn has_tips(&self) -> bool {
        self.snaps.iter().all(|s| s.tips.is_some())
    }

    fn stencil(&self, t: f64) -> Result<usize> {
        let (lo, hi) = self.t_range();
        let slack = 1e-12 * t.abs();
        if !(t >= lo - slack && t <= hi + slack) {
            return Err(Error::Range(format!("t = {t} outside the recorded window [{lo}, {hi}]")));
        }
        let ts = self.times();
        let i = locate(&ts, t);
        Ok(i.saturating_sub(1).min(self.snaps.len() - 4))
    }
}

impl FlowHistory for SnapshotFlow {
    fn n(&self) -> usize {
        self.n
    }

    fn t_range(&self) -> (f64, f64) {
        (self.snaps[0].t, self.snaps[self.snaps.len() - 1].t)
    }

    fn sample(&self, z: f64, t: f64) -> Result<FlowSample> {
        let k = self.stencil(t)?;
        let st = &self.snaps[k..k + 4];
        let ts: Vec<f64> = st.iter().map(|s| s.t).collect();
        let w = lagrange_weights(&ts, t);
        let mut nonlocal = 0.0;
        for (j, s) in st.iter().enumerate() {
            nonlocal += w[j] * s.nonlocal(z, &self.gl)?;
        }
        let i = locate(&ts, t).min(2);
        let (a, b) = (&st[i], &st[i + 1]);
        a.check(z)?;
        b.check(z)?;
        let h = b.t - a.t;
        let x = ((t - a.t) / h).clamp(0.0, 1.0);
        let (x2, x3) = (x * x, x * x * x);
        let hw = [2.0 * x3 - 3.0 * x2 + 1.0, h * (x3 - 2.0 * x2 + x), -2.0 * x3 + 3.0 * x2, h * (x3 - x2)];
        let dw = [(6.0 * x2 - 6.0 * x) / h, 3.0 * x2 - 4.0 * x + 1.0, (-6.0 * x2 + 6.0 * x) / h, 3.0 * x2 - 2.0 * x];
        let fa = a.spline.eval3(z);
        let fb = b.spline.eval3(z);
        let ga = a.ft.eval3(z);
        let gb = b.ft.eval3(z);
        let mix = |c: &[f64; 4], p: f64, q: f64, r: f64, u: f64| c[0] * p + c[1] * q + c[2] * r + c[3] * u;
        Ok(FlowSample {
            f: mix(&hw, fa.0, ga.0, fb.0, gb.0),
            fz: mix(&hw, fa.1, ga.1, fb.1, gb.1),
            fzz: mix(&hw, fa.2, ga.2, fb.2, gb.2),
            ft: mix(&dw, fa.0, ga.0, fb.0, gb.0),
            nonlocal,
        })
    }

    fn support(&self, t: f64) -> Result<(f64, f64)> {
        let k = self.stencil(t)?;
        let st = &self.snaps[k..k + 4];
        Ok((
            st.iter().map(|s| s.z_lo).fold(f64::NEG_INFINITY, f64::max),
            st.iter().map(|s| s.z_hi).fold(f64::INFINITY, f64::min),
        ))
    }

    fn tip_v(&self, side: Side, rho: f64, tau: f64) -> Result<f64> {
        let k = self.stencil(-(-tau).exp())?;
        let st = &self.snaps[k..k + 4];
        let taus: Vec<f64> = st.iter().map(|s| s.tau).collect();
        let w = lagrange_weights(&taus, tau);
        let mut v = 0.0;
        for (j, s) in st.iter().enumerate() {
            v += w[j] * s.tip(side, rho)?;
        }
        Ok(v)
    }
}

/// Evolves `start` and records it at each requested τ (increasing).
pub fn record_snapshots(start: &ProfileState, taus: &[f64], safety: f64) -> Result<Vec<ProfileState>> {
    let mut cur = start.clone();
    let mut out = Vec::with_capacity(taus.len());
    for &tau in taus {
        let t = -(-tau).exp();
        if t < cur.t {
            return Err(param("taus", "must be increasing and not precede the start"));
        }
        cur = cur.evolve_to(t, safety)?;
        out.push(cur.clone());
    }
    Ok(out)
}

/// `n` points uniform in τ on `[a, b]`.
pub fn tau_grid(a: f64, b: f64, points: usize) -> Vec<f64> {
    let h = (b - a) / (points - 1) as f64;
    let mut v: Vec<f64> = (0..points).map(|i| a + i as f64 * h).collect();
    v[points - 1] = b;
    v
}

/// Integrates a scalar ODE from `(t0, y0)` through `ts` (ordered away from
/// t0); returns `(t, y, y')` per entry.
fn integrate_scalar(
    rhs: impl Fn(f64, f64) -> Result<f64>,
    t0: f64,
    y0: f64,
    ts: &[f64],
) -> Result<Vec<(f64, f64, f64)>> {
    let mut out = Vec::with_capacity(ts.len());
    let (mut t, mut y) = (t0, y0);
    let ctl = StepControl { rtol: 1e-11, atol: 1e-12, h_init: 1e-3, max_steps: 200_000 };
    for &target in ts {
        let span = (target - t).abs();
        let mut failure = None;
        let res = dopri45(
            |tt, yy: &[f64; 1]| match rhs(tt, yy[0]) {
                Ok(v) => [v],
                Err(e) => {
                    failure.get_or_insert(e);
                    [0.0]
                }
            },
            t,
            [y],
            target,
            StepControl { h_init: (ctl.h_init * span.max(1.0)).min(span.max(1e-300)), ..ctl },
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        t = target;
        y = res.y[0];
        out.push((t, y, rhs(t, y)?));
    }
    Ok(out)
}

fn sorted_track(mut pts: Vec<(f64, f64, f64)>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pts.dedup_by(|a, b| a.0 == b.0);
    (pts.iter().map(|p| p.0).collect(), pts.iter().map(|p| p.1).collect(), pts.iter().map(|p| p.2).collect())
}

/// The flow `F₂(w, t') = e^{-γ₀/2} F₁(e^{γ₀/2} w + σ(T), T)` with
/// `T = e^{γ₀} t' + β₀`, where `σ` follows the material point of the base
/// flow with `σ(t_ref) = -α₀`. Evaluating the triplet `(α₀, β₀, γ₀)` at
/// `t_ref` against this flow gives back the base flow exactly.
pub struct ReparamFlow<'a> {
    base: &'a dyn FlowHistory,
    pub alpha0: f64,
    pub beta0: f64,
    pub gamma0: f64,
    pub t_ref: f64,
    sigma: Hermite,
}

impl<'a> ReparamFlow<'a> {
    pub fn new(base: &'a dyn FlowHistory, alpha0: f64, beta0: f64, gamma0: f64, t_ref: f64, nodes: usize) -> Result<Self> {
        let (lo, hi) = base.t_range();
        if !(t_ref >= lo && t_ref <= hi) {
            return Err(Error::Range(format!("t_ref = {t_ref} outside [{lo}, {hi}]")));
        }
        if nodes < 4 {
            return Err(param("nodes", "need at least 4"));
        }
        let c = base.n() as f64 - 1.0;
        let rhs = |t: f64, y: f64| Ok(c * base.sample(y, t)?.nonlocal);
        let grid = tau_grid(-(-lo).ln(), -(-hi).ln(), nodes);
        let ts: Vec<f64> = grid.iter().map(|&tau| -(-tau).exp()).collect();
        let below: Vec<f64> = ts.iter().rev().cloned().filter(|&t| t < t_ref).collect();
        let above: Vec<f64> = ts.iter().cloned().filter(|&t| t > t_ref).collect();
        let mut pts = vec![(t_ref, -alpha0, rhs(t_ref, -alpha0)?)];
        pts.extend(integrate_scalar(rhs, t_ref, -alpha0, &below)?);
        pts.extend(integrate_scalar(rhs, t_ref, -alpha0, &above)?);
        let (x, y, dy) = sorted_track(pts);
        Ok(Self { base, alpha0, beta0, gamma0, t_ref, sigma: Hermite::new(x, y, dy) })
    }

    fn base_time(&self, t: f64) -> f64 {
        self.gamma0.exp() * t + self.beta0
    }

    /// `σ(T)` from the stored track.
    pub fn sigma(&self, t_base: f64) -> f64 {
        self.sigma.eval(t_base)
    }
}

impl FlowHistory for ReparamFlow<'_> {
    fn n(&self) -> usize {
        self.base.n()
    }

    fn t_range(&self) -> (f64, f64) {
        let (lo, hi) = self.base.t_range();
        let k = (-self.gamma0).exp();
        (k * (lo - self.beta0), k * (hi - self.beta0))
    }

    fn sample(&self, w: f64, t: f64) -> Result<FlowSample> {
        let tb = self.base_time(t);
        let e = (0.5 * self.gamma0).exp();
        let sig = self.sigma.eval(tb);
        let at = self.base.sample(e * w + sig, tb)?;
        let at_sig = self.base.sample(sig, tb)?;
        let dsig = (self.n() as f64 - 1.0) * at_sig.nonlocal;
        Ok(FlowSample {
            f: at.f / e,
            fz: at.fz,
            fzz: e * at.fzz,
            ft: e * (at.fz * dsig + at.ft),
            nonlocal: e * (at.nonlocal - at_sig.nonlocal),
        })
    }

    fn support(&self, t: f64) -> Result<(f64, f64)> {
        let tb = self.base_time(t);
        let (lo, hi) = self.base.support(tb)?;
        let sig = self.sigma.eval(tb);
        let e = (-0.5 * self.gamma0).exp();
        Ok((e * (lo - sig), e * (hi - sig)))
    }

    fn tip_v(&self, side: Side, rho: f64, tau: f64) -> Result<f64> {
        let t = -(-tau).exp();
        let tb = self.base_time(t);
        if !(tb < 0.0) {
            return Err(Error::Range(format!("base time {tb} is not negative")));
        }
        let r = rho * (0.5 * self.gamma0).exp() * (t / tb).sqrt();
        self.base.tip_v(side, r, -(-tb).ln())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ShiftTrack {
    /// Increasing, ending at `t_star`.
    pub t_grid: Vec<f64>,
    pub s: Vec<f64>,
    pub ds: Vec<f64>,
    pub epsilon: f64,
    /// `|s| / (ε sqrt(-t))` per sample.
    pub budget_ratio: Vec<f64>,
    pub max_budget_ratio: f64,
    pub within_budget: bool,
}

impl ShiftTrack {
    /// `(s, s')` by cubic Hermite interpolation of the track.
    pub fn at(&self, t: f64) -> Result<(f64, f64)> {
        let (lo, hi) = (self.t_grid[0], self.t_grid[self.t_grid.len() - 1]);
        let slack = 1e-12 * t.abs();
        if !(t >= lo - slack && t <= hi + slack) {
            return Err(Error::Range(format!("t = {t} outside the shift track [{lo}, {hi}]")));
        }
        if self.t_grid.len() == 1 {
            return Ok((self.s[0], self.ds[0]));
        }
        let h = Hermite::new(self.t_grid.clone(), self.s.clone(), self.ds.clone());
        let (v, d, _) = h.eval3(t);
        Ok((v, d))
    }
}

/// `s'(t) = (n-1) e^{-γ/2} I₂(e^{-γ/2} s, e^{-γ}(t-β))`.
fn shift_rate(flow2: &dyn FlowHistory, tr: &ReparamTriplet, t: f64, s: f64) -> Result<f64> {
    let e = (-0.5 * tr.gamma).exp();
    let t2 = (-tr.gamma).exp() * (t - tr.beta);
    Ok((flow2.n() as f64 - 1.0) * e * flow2.sample(e * s, t2)?.nonlocal)
}

/// Backward integration of the shift from `s(t_star) = α` through the
/// requested times (all `≤ t_star`).
pub fn solve_shift(triplet: &ReparamTriplet, flow2: &dyn FlowHistory, times: &[f64]) -> Result<ShiftTrack> {
    if !triplet.admissibility().admissible {
        return Err(Error::Inadmissible(format!("{:?}", triplet.params())));
    }
    if times.iter().any(|&t| t > triplet.t_star) {
        return Err(param("times", "must not exceed t_star"));
    }
    let mut back: Vec<f64> = times.iter().cloned().filter(|&t| t < triplet.t_star).collect();
    back.sort_by(|a, b| b.partial_cmp(a).unwrap());
    back.dedup();
    let rhs = |t: f64, s: f64| shift_rate(flow2, triplet, t, s);
    let mut pts = vec![(triplet.t_star, triplet.alpha, rhs(triplet.t_star, triplet.alpha)?)];
    pts.extend(integrate_scalar(rhs, triplet.t_star, triplet.alpha, &back)?);
    let (t_grid, s, ds) = sorted_track(pts);
    let budget_ratio: Vec<f64> =
        t_grid.iter().zip(&s).map(|(&t, &v)| v.abs() / (triplet.epsilon * (-t).sqrt())).collect();
    let max_budget_ratio = budget_ratio.iter().cloned().fold(0.0, f64::max);
    Ok(ShiftTrack { t_grid, s, ds, epsilon: triplet.epsilon, budget_ratio, max_budget_ratio, within_budget: max_budget_ratio <= 1.0 })
}

/// `F₂^{αβγ}(z, t) = e^{γ/2} F₂(e^{-γ/2}(z + s), e^{-γ}(t - β))` with its
/// derivatives; `shift` is `s^{αβγ}(t)`.
pub fn reparam_profile(flow2: &dyn FlowHistory, triplet: &ReparamTriplet, shift: f64, z: f64, t: f64) -> Result<FlowSample> {
    let e = (0.5 * triplet.gamma).exp();
    let t2 = (-triplet.gamma).exp() * (t - triplet.beta);
    let at = flow2.sample((z + shift) / e, t2)?;
    let at0 = flow2.sample(shift / e, t2)?;
    let ds = (flow2.n() as f64 - 1.0) * at0.nonlocal / e;
    Ok(FlowSample {
        f: e * at.f,
        fz: at.fz,
        fzz: at.fzz / e,
        ft: at.fz * ds + at.ft / e,
        nonlocal: (at.nonlocal - at0.nonlocal) / e,
    })
}

/// `V₂^{βγ}(ρ, τ) = V₂(ρ / sqrt(1 + β e^τ), τ + γ - log(1 + β e^τ))`.
pub fn v2_beta_gamma(flow2: &dyn FlowHistory, side: Side, beta: f64, gamma: f64, rho: f64, tau: f64) -> Result<f64> {
    let k = 1.0 + beta * tau.exp();
    if !(k > 0.0) {
        return Err(param("beta", "1 + β e^τ must be positive"));
    }
    flow2.tip_v(side, rho / k.sqrt(), tau + gamma - k.ln())
}

/// `V₂^{βγ}` built directly from `F₂^{βγ}`: the point on the tip branch
/// where `F₂^{βγ} = ρ sqrt(-t)`, and `|F_z|` there.
pub fn v2_beta_gamma_direct(flow2: &dyn FlowHistory, side: Side, beta: f64, gamma: f64, rho: f64, tau: f64) -> Result<f64> {
    let t = -(-tau).exp();
    let e = (0.5 * gamma).exp();
    let t2 = (-gamma).exp() * (t - beta);
    let (lo, hi) = flow2.support(t2)?;
    let sign = if side == Side::Plus { 1.0 } else { -1.0 };
    let target = rho * (-t).sqrt();
    let start = 2.0 * (-t).sqrt() / e;
    let end = if side == Side::Plus { hi } else { -lo };
    let g = |w: f64| flow2.sample(sign * w, t2).map(|s| e * s.f - target).unwrap_or(f64::NAN);
    let w = bisect(g, start, end, 1e-13 * end.abs()).ok_or_else(|| Error::NotSatisfied(format!("no branch point with rho = {rho}")))?;
    Ok(flow2.sample(sign * w, t2)?.fz.abs())
}

/// Cutoff `χ_C`: 1 on `[0, c1]`, 0 beyond `c2`, quintic in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cutoff {
    pub c1: f64,
    pub c2: f64,
}

impl Cutoff {
    pub fn new(n: usize, theta: f64) -> Result<Self> {
        check_dim(n)?;
        let d = n as f64 - 2.0;
        if !(theta > 0.0 && theta * theta < 8.0 * d) {
            return Err(param("theta", "need 0 < θ² < 8(n-2)"));
        }
        Ok(Self { c1: (4.0 - theta * theta / (2.0 * d)).sqrt(), c2: (4.0 - theta * theta / (4.0 * d)).sqrt() })
    }

    /// `(χ, χ', χ'')` at x.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let w = self.c2 - self.c1;
        let u = (x.abs() - self.c1) / w;
        let sg = if x < 0.0 { -1.0 } else { 1.0 };
        (1.0 - smoothstep(u), -sg * smoothstep_d1(u) / w, -smoothstep_d2(u) / (w * w))
    }
}

/// `ω_T`: 1 for ρ ≤ θ, 0 for ρ ≥ 2θ, quintic in between.
pub fn omega_t(theta: f64, rho: f64) -> f64 {
    1.0 - smoothstep((rho - theta) / theta)
}

/// Both rescaled profiles and their derivatives on a uniform ξ grid that
/// contains 0. `g*t` are τ-derivatives at fixed ξ.
#[derive(Debug, Clone, Serialize)]
pub struct PairFields {
    pub n: usize,
    pub tau: f64,
    pub xi: Vec<f64>,
    pub g1: Vec<f64>,
    pub g1x: Vec<f64>,
    pub g1xx: Vec<f64>,
    pub g1t: Vec<f64>,
    pub g2: Vec<f64>,
    pub g2x: Vec<f64>,
    pub g2xx: Vec<f64>,
    pub g2t: Vec<f64>,
}

/// `(G, G_ξ, G_ξξ, G_τ)` from a profile sample taken at
/// `z = e^{-τ/2} ξ`, `t = -e^{-τ}`.
pub fn rescale_sample(n: usize, s: &FlowSample, xi: f64, tau: f64) -> [f64; 4] {
    let e = (0.5 * tau).exp();
    let g = e * s.f - neck_radius(n);
    [g, s.fz, s.fzz / e, 0.5 * e * s.f - 0.5 * xi * s.fz + s.ft / e]
}

/// Integrals `∫_0^{ξ_i} y` on a uniform grid with `ξ_{i0} = 0`, one
/// quadratic per cell.
fn cumulative_from(y: &[f64], h: f64, i0: usize) -> Vec<f64> {
    let m = y.len();
    let mut out = vec![0.0; m];
    let cell = |i: usize| -> f64 {
        if i >= 1 && i + 2 < m {
            h / 24.0 * (-y[i - 1] + 13.0 * y[i] + 13.0 * y[i + 1] - y[i + 2])
        } else if i + 2 < m {
            h / 12.0 * (5.0 * y[i] + 8.0 * y[i + 1] - y[i + 2])
        } else {
            h / 12.0 * (-y[i - 1] + 8.0 * y[i] + 5.0 * y[i + 1])
        }
    };
    for i in i0..m - 1 {
        out[i + 1] = out[i] + cell(i);
    }
    for i in (1..=i0).rev() {
        out[i - 1] = out[i] - cell(i - 1);
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorTerms {
    pub tau: f64,
    pub xi: Vec<f64>,
    pub h: Vec<f64>,
    pub hc: Vec<f64>,
    /// `E_1 .. E_6`.
    pub e: Vec<Vec<f64>>,
    /// `E_{C,1} .. E_{C,10}`.
    pub ec: Vec<Vec<f64>>,
    /// `H_τ - (H_ξξ - ξH_ξ/2 + H) - ΣE_k`.
    pub residual: Vec<f64>,
    /// `H_{C,τ} - 𝓛H_C - ΣE_{C,k}`.
    pub residual_c: Vec<f64>,
    pub max_residual: f64,
    pub max_residual_c: f64,
    pub max_hc_tau: f64,
}

/// Evaluates the sixteen error terms of the difference equation and the
/// residuals of both forms of that equation.
pub fn error_terms_from_fields(p: &PairFields, theta: f64) -> Result<ErrorTerms> {
    let m = p.xi.len();
    if m < 5 || [&p.g1, &p.g1x, &p.g1xx, &p.g1t, &p.g2, &p.g2x, &p.g2xx, &p.g2t].iter().any(|v| v.len() != m) {
        return Err(Error::Grid("pair fields need matching arrays of at least 5 points".into()));
    }
    if !(p.tau < 0.0) {
        return Err(param("tau", "must be negative"));
    }
    let h = p.xi[1] - p.xi[0];
    let i0 = p.xi.iter().position(|x| x.abs() < 0.25 * h).ok_or_else(|| Error::Grid("ξ = 0 is not a node".into()))?;
    let cut = Cutoff::new(p.n, theta)?;
    let nn = p.n as f64;
    let s = neck_radius(p.n);
    let r = (-p.tau).powf(-0.5);
    let u1: Vec<f64> = p.g1.iter().map(|g| s + g).collect();
    let u2: Vec<f64> = p.g2.iter().map(|g| s + g).collect();
    if u1.iter().chain(&u2).any(|&u| !(u > 0.0)) {
        return Err(Error::Range("profile reaches zero inside the ξ window".into()));
    }
    let hd: Vec<f64> = (0..m).map(|i| p.g1[i] - p.g2[i]).collect();
    let hx: Vec<f64> = (0..m).map(|i| p.g1x[i] - p.g2x[i]).collect();
    let hxx: Vec<f64> = (0..m).map(|i| p.g1xx[i] - p.g2xx[i]).collect();
    let ht: Vec<f64> = (0..m).map(|i| p.g1t[i] - p.g2t[i]).collect();
    let b1_int = cumulative_from(&(0..m).map(|i| (p.g1x[i] / u1[i]).powi(2)).collect::<Vec<_>>(), h, i0);
    let b1: Vec<f64> = (0..m).map(|i| p.g1x[i0] / u1[i0] - b1_int[i]).collect();
    let k1 = cumulative_from(&(0..m).map(|i| (p.g1x[i] + p.g2x[i]) * hx[i] / (u2[i] * u2[i])).collect::<Vec<_>>(), h, i0);
    let k2 = cumulative_from(
        &(0..m)
            .map(|i| (2.0 * s + p.g1[i] + p.g2[i]) * hd[i] * p.g1x[i].powi(2) / (u1[i] * u2[i]).powi(2))
            .collect::<Vec<_>>(),
        h,
        i0,
    );
    let e5c = hx[i0] / u1[i0] - p.g2x[i0] * hd[i0] / (u1[i0] * u2[i0]);
    let mut e = vec![vec![0.0; m]; 6];
    let mut ec = vec![vec![0.0; m]; 10];
    let mut hc = vec![0.0; m];
    let mut residual = vec![0.0; m];
    let mut residual_c = vec![0.0; m];
    let mut max_hc_tau = 0.0f64;
    for i in 0..m {
        let x = p.xi[i];
        let (chi, c1, c2) = cut.eval(r * x);
        let a = (nn - 2.0) / (u1[i] * u2[i]) - 0.5;
        let g12 = p.g1x[i] + p.g2x[i];
        let hci = chi * hd[i];
        let hcx = r * c1 * hd[i] + chi * hx[i];
        let hcxx = r * r * c2 * hd[i] + 2.0 * r * c1 * hx[i] + chi * hxx[i];
        let hct = chi * ht[i] + 0.5 * r * r * r * x * c1 * hd[i];
        hc[i] = hci;
        e[0][i] = a * hd[i];
        e[1][i] = p.g1x[i].powi(2) * hd[i] / (u1[i] * u2[i]);
        e[2][i] = -g12 * hx[i] / u2[i];
        e[3][i] = (nn - 1.0) * b1[i] * hx[i];
        e[4][i] = (nn - 1.0) * p.g2x[i] * e5c;
        e[5][i] = (nn - 1.0) * p.g2x[i] * (-k1[i] + k2[i]);
        ec[0][i] = a * hci;
        ec[1][i] = p.g1x[i].powi(2) * hci / (u1[i] * u2[i]);
        ec[2][i] = -g12 * hcx / u2[i];
        ec[3][i] = (nn - 1.0) * b1[i] * hcx;
        ec[4][i] = chi * e[4][i];
        ec[5][i] = chi * e[5][i];
        ec[6][i] = g12 / u2[i] * r * c1 * hd[i];
        ec[7][i] = -(nn - 1.0) * b1[i] * r * c1 * hd[i];
        ec[8][i] = r * r * c2 * hd[i] + 0.5 * r * r * r * x * c1 * hd[i];
        ec[9][i] = -2.0 * r * (r * c2 * hd[i] + c1 * hx[i]) + 0.5 * r * x * c1 * hd[i];
        let se: f64 = e.iter().map(|v| v[i]).sum();
        let sec: f64 = ec.iter().map(|v| v[i]).sum();
        residual[i] = ht[i] - (hxx[i] - 0.5 * x * hx[i] + hd[i]) - se;
        residual_c[i] = hct - (hcxx - 0.5 * x * hcx + hci) - sec;
        max_hc_tau = max_hc_tau.max(hct.abs());
    }
    let mx = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    Ok(ErrorTerms {
        tau: p.tau,
        xi: p.xi.clone(),
        h: hd,
        hc,
        max_residual: mx(&residual),
        max_residual_c: mx(&residual_c),
        e,
        ec,
        residual,
        residual_c,
        max_hc_tau,
    })
}

/// Two flows and the settings shared by every difference computation.
pub struct PairContext<'a> {
    pub flow1: &'a dyn FlowHistory,
    pub flow2: &'a dyn FlowHistory,
    pub triplet: ReparamTriplet,
    /// Sets the cylindrical cutoff `χ_C`.
    pub theta: f64,
    /// Sets `ω_T` in the tip region; defaults to `theta`.
    pub theta_tip: f64,
    pub space: SpectralSpace,
}

impl<'a> PairContext<'a> {
    pub fn new(flow1: &'a dyn FlowHistory, flow2: &'a dyn FlowHistory, triplet: ReparamTriplet, theta: f64, space: SpectralSpace) -> Result<Self> {
        if flow1.n() != flow2.n() {
            return Err(param("flow2", "dimensions differ"));
        }
        Cutoff::new(flow1.n(), theta)?;
        Ok(Self { flow1, flow2, triplet, theta, theta_tip: theta, space })
    }

    pub fn with_tip_theta(mut self, theta_tip: f64) -> Self {
        self.theta_tip = theta_tip;
        self
    }

    pub fn n(&self) -> usize {
        self.flow1.n()
    }

    pub fn with_triplet(&self, triplet: ReparamTriplet) -> Self {
        Self { triplet, space: self.space.clone(), ..*self }
    }

    fn shift_at(&self, tau: f64, shift: Option<&ShiftTrack>) -> Result<f64> {
        if (tau - self.triplet.tau_star()).abs() <= 1e-12 * tau.abs() {
            return Ok(self.triplet.alpha);
        }
        let track = shift.ok_or_else(|| param("shift", "needed away from t_star"))?;
        Ok(track.at(-(-tau).exp())?.0)
    }

    /// Samples both rescaled profiles on the spectral grid points where
    /// the cutoff is nonzero.
    pub fn pair_fields(&self, tau: f64, shift: Option<&ShiftTrack>) -> Result<PairFields> {
        let s = self.shift_at(tau, shift)?;
        let cut = Cutoff::new(self.n(), self.theta)?;
        let reach = cut.c2 * (-tau).sqrt();
        let xi: Vec<f64> = self.space.grid().into_iter().filter(|x| x.abs() <= reach).collect();
        let t = -(-tau).exp();
        let ez = (-0.5 * tau).exp();
        let m = xi.len();
        let mut p = PairFields {
            n: self.n(),
            tau,
            xi: xi.clone(),
            g1: Vec::with_capacity(m),
            g1x: Vec::with_capacity(m),
            g1xx: Vec::with_capacity(m),
            g1t: Vec::with_capacity(m),
            g2: Vec::with_capacity(m),
            g2x: Vec::with_capacity(m),
            g2xx: Vec::with_capacity(m),
            g2t: Vec::with_capacity(m),
        };
        for &x in &xi {
            let a = rescale_sample(self.n(), &self.flow1.sample(ez * x, t)?, x, tau);
            let b = rescale_sample(self.n(), &reparam_profile(self.flow2, &self.triplet, s, ez * x, t)?, x, tau);
            p.g1.push(a[0]);
            p.g1x.push(a[1]);
            p.g1xx.push(a[2]);
            p.g1t.push(a[3]);
            p.g2.push(b[0]);
            p.g2x.push(b[1]);
            p.g2xx.push(b[2]);
            p.g2t.push(b[3]);
        }
        Ok(p)
    }

    /// `H` and `H_C` on the full spectral grid (zero where the cutoff is).
    pub fn cut_difference(&self, tau: f64, shift: Option<&ShiftTrack>) -> Result<(WeightedFunction, WeightedFunction)> {
        let p = self.pair_fields(tau, shift)?;
        let cut = Cutoff::new(self.n(), self.theta)?;
        let r = (-tau).powf(-0.5);
        let grid = self.space.grid();
        let mut h = vec![0.0; grid.len()];
        let mut hc = vec![0.0; grid.len()];
        let off = grid.iter().position(|&x| x == p.xi[0]).unwrap_or(0);
        for (k, &x) in p.xi.iter().enumerate() {
            let d = p.g1[k] - p.g2[k];
            h[off + k] = d;
            hc[off + k] = cut.eval(r * x).0 * d;
        }
        Ok((WeightedFunction::from_samples(grid.clone(), h)?, WeightedFunction::from_samples(grid, hc)?))
    }

    /// `(⟨1, H_C⟩, ⟨ξ, H_C⟩, ⟨ξ²-2, H_C⟩)` and `‖H_C‖_𝓗` at τ*.
    pub fn mode_residual(&self) -> Result<([f64; 3], f64)> {
        let (_, hc) = self.cut_difference(self.triplet.tau_star(), None)?;
        let one = hc.map(|_, _| 1.0);
        let lin = hc.map(|x, _| x);
        let quad = hc.map(|x, _| x * x - 2.0);
        let r = [self.space.inner(&one, &hc)?, self.space.inner(&lin, &hc)?, self.space.inner(&quad, &hc)?];
        Ok((r, self.space.inner(&hc, &hc)?.sqrt()))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiffFields {
    pub tau: f64,
    pub xi_grid: Vec<f64>,
    /// `G₁ - G₂^{αβγ}` where the cutoff is nonzero, 0 elsewhere.
    pub hdiff: Vec<f64>,
    pub hc: Vec<f64>,
    /// `(P_+ + P_-) H_C`.
    pub hc_hat: Vec<f64>,
    pub c_const: f64,
    pub c_lin: f64,
    pub a: f64,
    pub hc_norm: f64,
    /// `∫ e^{-ξ²/4} (Ĥ_{C,ξ}² + Ĥ_C²)`.
    pub hat_energy: f64,
    /// Largest `|H_C - (P_+ H_C + sqrt(2(n-2)) a (ξ²-2) + P_- H_C)|`.
    pub reconstruction_error: f64,
    pub rho_grid: Vec<f64>,
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
    pub w_t: Vec<f64>,
}

/// Difference fields at one τ. `shift` is required away from τ*; an empty
/// `rho_grid` skips the tip fields.
pub fn diff_fields(ctx: &PairContext, shift: Option<&ShiftTrack>, tau: f64, rho_grid: &[f64]) -> Result<DiffFields> {
    let (h, hc) = ctx.cut_difference(tau, shift)?;
    let dec = ctx.space.project(&hc, ctx.n());
    let hat = dec.hat();
    let rec = dec.reconstruct();
    let reconstruction_error = rec.values.iter().zip(&hc.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let hat_energy = ctx.space.norms(&hat).d.powi(2);
    let hc_norm = ctx.space.inner(&hc, &hc)?.sqrt();
    let tr = &ctx.triplet;
    let (mut wp, mut wm, mut wt) = (vec![], vec![], vec![]);
    for &rho in rho_grid {
        let p = ctx.flow1.tip_v(Side::Plus, rho, tau)? - v2_beta_gamma(ctx.flow2, Side::Plus, tr.beta, tr.gamma, rho, tau)?;
        let q = ctx.flow1.tip_v(Side::Minus, rho, tau)? - v2_beta_gamma(ctx.flow2, Side::Minus, tr.beta, tr.gamma, rho, tau)?;
        wp.push(p);
        wm.push(q);
        wt.push(omega_t(ctx.theta_tip, rho) * p);
    }
    Ok(DiffFields {
        tau,
        xi_grid: h.xi_grid.clone(),
        hdiff: h.values,
        hc: hc.values,
        hc_hat: hat.values,
        c_const: dec.c_const,
        c_lin: dec.c_lin,
        a: dec.a,
        hc_norm,
        hat_energy,
        reconstruction_error,
        rho_grid: rho_grid.to_vec(),
        w_plus: wp,
        w_minus: wm,
        w_t: wt,
    })
}

/// Error terms at τ from the two flows.
pub fn error_terms(ctx: &PairContext, shift: Option<&ShiftTrack>, tau: f64) -> Result<ErrorTerms> {
    error_terms_from_fields(&ctx.pair_fields(tau, shift)?, ctx.theta)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KillOptions {
    pub max_iterations: usize,
    /// Converged when `|r| ≤ rel_tol · |r(0,0,0)| + abs_tol`.
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Finite-difference step as a fraction of each admissibility budget.
    pub fd_step: f64,
    pub multi_start: bool,
}

impl Default for KillOptions {
    fn default() -> Self {
        Self { max_iterations: 50, rel_tol: 1e-11, abs_tol: 1e-15, fd_step: 1e-4, multi_start: true }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KillReport {
    pub triplet: ReparamTriplet,
    pub residual: [f64; 3],
    pub iterations: usize,
    pub hc_norm: f64,
    /// `‖H_C(τ*)‖_𝓗` for the triplet (0, 0, 0).
    pub unkilled_norm: f64,
    pub a_star: f64,
    pub delta: f64,
    pub delta_admissible: bool,
    /// Distinct roots found from all starts.
    pub roots: Vec<[f64; 3]>,
}

fn norm3(r: &[f64; 3]) -> f64 {
    (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt()
}

fn newton(ctx: &PairContext, scale: [f64; 3], x0: [f64; 3], tol: f64, opts: &KillOptions) -> Option<([f64; 3], [f64; 3], usize)> {
    let eval = |x: &[f64; 3]| -> Option<[f64; 3]> {
        let p = [x[0] * scale[0], x[1] * scale[1], x[2] * scale[2]];
        ctx.with_triplet(ctx.triplet.with_params(p)).mode_residual().ok().map(|r| r.0)
    };
    let mut x = x0;
    let mut r = eval(&x)?;
    for it in 0..opts.max_iterations {
        if norm3(&r) <= tol {
            return Some((x, r, it));
        }
        let mut jac = Matrix3::zeros();
        for k in 0..3 {
            let mut xp = x;
            xp[k] += opts.fd_step;
            let rp = eval(&xp)?;
            for i in 0..3 {
                jac[(i, k)] = (rp[i] - r[i]) / opts.fd_step;
            }
        }
        let dx = jac.lu().solve(&Vector3::new(-r[0], -r[1], -r[2]))?;
        let mut lam = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let xn = [x[0] + lam * dx[0], x[1] + lam * dx[1], x[2] + lam * dx[2]];
            if let Some(rn) = eval(&xn) {
                if norm3(&rn) < norm3(&r) {
                    x = xn;
                    r = rn;
                    accepted = true;
                    break;
                }
            }
            lam *= 0.5;
        }
        if !accepted {
            return (norm3(&r) <= tol).then_some((x, r, it));
        }
    }
    (norm3(&r) <= tol).then_some((x, r, opts.max_iterations))
}

/// Damped Newton on the three non-decaying projections of `H_C` at τ*,
/// in units of the admissibility budgets of `ctx.triplet.epsilon`.
pub fn kill_modes(ctx: &PairContext, delta: f64, opts: &KillOptions) -> Result<KillReport> {
    let base = ctx.triplet.with_params([0.0; 3]);
    let ctx0 = ctx.with_triplet(base);
    let (r0, unkilled_norm) = ctx0.mode_residual()?;
    let scale = base.budgets();
    let tol = opts.rel_tol * norm3(&r0) + opts.abs_tol;
    let mut starts = vec![[0.0; 3]];
    if opts.multi_start {
        for k in 0..3 {
            for sg in [0.5, -0.5] {
                let mut x = [0.0; 3];
                x[k] = sg;
                starts.push(x);
            }
        }
    }
    let mut roots: Vec<([f64; 3], [f64; 3], usize)> = vec![];
    for x0 in starts {
        if let Some(root) = newton(&ctx0, scale, x0, tol, opts) {
            if !roots.iter().any(|q| (0..3).all(|k| (q.0[k] - root.0[k]).abs() < 1e-6)) {
                roots.push(root);
            }
        }
    }
    let best = roots
        .iter()
        .min_by(|a, b| norm3(&a.0).partial_cmp(&norm3(&b.0)).unwrap())
        .cloned()
        .ok_or(Error::Newton { iterations: opts.max_iterations, residual: norm3(&r0) })?;
    let p = [best.0[0] * scale[0], best.0[1] * scale[1], best.0[2] * scale[2]];
    let triplet = base.with_params(p);
    let killed = ctx.with_triplet(triplet);
    let (_, hc) = killed.cut_difference(triplet.tau_star(), None)?;
    let a_star = ctx.space.project(&hc, ctx.n()).a;
    let hc_norm = ctx.space.inner(&hc, &hc)?.sqrt();
    Ok(KillReport {
        triplet,
        residual: best.1,
        iterations: best.2,
        hc_norm,
        unkilled_norm,
        a_star,
        delta,
        delta_admissible: triplet.with_epsilon(delta).admissibility().admissible,
        roots: roots.iter().map(|q| [q.0[0] * scale[0], q.0[1] * scale[1], q.0[2] * scale[2]]).collect(),
    })
}

/// Integrals `∫_{τ-1}^{τ} v` at every sample with a full unit window
/// behind it; the spacing must divide 1.
fn unit_windows(taus: &[f64], v: &[f64]) -> Result<Vec<(f64, f64)>> {
    let h = check_uniform(taus)?;
    let w = (1.0 / h).round() as usize;
    if (w as f64 * h - 1.0).abs() > 1e-6 {
        return Err(param("taus", "spacing must divide 1"));
    }
    if taus.len() <= w {
        return Err(param("taus", "window shorter than one unit of τ"));
    }
    Ok((w..taus.len()).map(|k| (taus[k], trapezoid(&taus[k - w..=k], &v[k - w..=k]))).collect())
}

fn check_uniform(taus: &[f64]) -> Result<f64> {
    if taus.len() < 3 {
        return Err(Error::HistoryTooShort { need: 3, got: taus.len() });
    }
    let h = taus[1] - taus[0];
    if !(h > 0.0) || taus.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0)) {
        return Err(param("taus", "must be uniform and increasing"));
    }
    Ok(h)
}

#[derive(Debug, Clone, Serialize)]
pub struct NeutralSeries {
    pub taus: Vec<f64>,
    pub a: Vec<f64>,
    pub hc_norm: Vec<f64>,
    pub hat_energy: Vec<f64>,
}

/// `a(τ)` and the `Ĥ_C` energies on a τ grid ending at τ*.
pub fn neutral_series(ctx: &PairContext, shift: &ShiftTrack, taus: &[f64]) -> Result<NeutralSeries> {
    let mut out = NeutralSeries { taus: taus.to_vec(), a: vec![], hc_norm: vec![], hat_energy: vec![] };
    for &tau in taus {
        let d = diff_fields(ctx, Some(shift), tau, &[])?;
        out.a.push(d.a);
        out.hc_norm.push(d.hc_norm);
        out.hat_energy.push(d.hat_energy);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct NeutralOdeReport {
    pub taus: Vec<f64>,
    pub q: Vec<f64>,
    /// Solution of `a' = 2a/(-τ) + Q` from `a(τ_last) = 0`.
    pub a_integrated: Vec<f64>,
    pub deviation: Vec<f64>,
    /// `∫_τ^{τ_last} |Q|`.
    pub q_budget: Vec<f64>,
    /// `sup (-τ) ∫_{τ-1}^τ |Q|`.
    pub q_window_sup: f64,
    /// `sup (∫_{τ-1}^τ a²)^{1/2}`.
    pub a_window_sup: f64,
    pub fitted_delta: f64,
    pub a_end: f64,
    /// Every sample before the last has `deviation ≤ 2 q_budget`.
    pub consistent: bool,
}

pub fn neutral_ode_monitor(taus: &[f64], a: &[f64]) -> Result<NeutralOdeReport> {
    if taus.len() != a.len() {
        return Err(Error::Grid("τ and a differ in length".into()));
    }
    let h = check_uniform(taus)?;
    if h > 0.1 + 1e-12 {
        return Err(param("taus", "spacing must be at most 0.1"));
    }
    let m = taus.len();
    let da = crate::numerics::d1_uniform(a, h);
    let q: Vec<f64> = (0..m).map(|k| da[k] - 2.0 * a[k] / (-taus[k])).collect();
    let absq: Vec<f64> = q.iter().map(|v| v.abs()).collect();
    let wq = unit_windows(taus, &absq)?;
    let q_window_sup = wq.iter().map(|(t, v)| -t * v).fold(0.0, f64::max);
    let a2: Vec<f64> = a.iter().map(|v| v * v).collect();
    let a_window_sup = unit_windows(taus, &a2)?.iter().map(|p| p.1.sqrt()).fold(0.0, f64::max);
    let wq2: Vec<f64> = (0..m).map(|k| taus[k] * taus[k] * q[k]).collect();
    let mut acc = 0.0;
    let mut bud = 0.0;
    let mut a_integrated = vec![0.0; m];
    let mut q_budget = vec![0.0; m];
    for k in (0..m - 1).rev() {
        acc += 0.5 * h * (wq2[k] + wq2[k + 1]);
        bud += 0.5 * h * (absq[k] + absq[k + 1]);
        a_integrated[k] = -acc / (taus[k] * taus[k]);
        q_budget[k] = bud;
    }
    let deviation: Vec<f64> = (0..m).map(|k| (a_integrated[k] - a[k]).abs()).collect();
    let consistent = (0..m - 1).all(|k| deviation[k] <= 2.0 * q_budget[k]);
    Ok(NeutralOdeReport {
        taus: taus.to_vec(),
        q,
        a_integrated,
        deviation,
        q_budget,
        q_window_sup,
        a_window_sup,
        fitted_delta: if a_window_sup > 0.0 { q_window_sup / a_window_sup } else { 0.0 },
        a_end: a[m - 1],
        consistent,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TipEnergyReport {
    pub taus: Vec<f64>,
    pub i: Vec<f64>,
    pub j: Vec<f64>,
    /// `sup (-τ)^{-1/2} I`.
    pub lhs: f64,
    /// `sup (-τ)^{-1/2} J`.
    pub rhs: f64,
    /// `lhs / ((-τ*)^{-1} rhs)`.
    pub fitted_c: f64,
}

/// `I(τ) = ∫_{τ-1}^τ ∫_0^{2θ} V₁₊^{-2} W_{T+}² e^{μ₊}` and `J(τ)` over
/// `[θ, 2θ]` with `W₊`, from per-τ difference fields and weights that
/// share their ρ grids.
pub fn tip_energy(fields: &[DiffFields], weights: &[WeightFn], tau_star: f64) -> Result<TipEnergyReport> {
    if fields.len() != weights.len() {
        return Err(Error::Grid("one weight per τ is needed".into()));
    }
    let mut inner_i = vec![];
    let mut inner_j = vec![];
    for (d, w) in fields.iter().zip(weights) {
        if d.rho_grid.len() != w.rho_grid.len() || d.rho_grid.iter().zip(&w.rho_grid).any(|(a, b)| (a - b).abs() > 1e-12 * b) {
            return Err(Error::Grid(format!("ρ grids differ at τ = {}", d.tau)));
        }
        let fi: Vec<f64> = (0..w.rho_grid.len()).map(|k| d.w_t[k].powi(2) * w.mu[k].exp() / w.v[k].powi(2)).collect();
        let idx: Vec<usize> = (0..w.rho_grid.len()).filter(|&k| w.rho_grid[k] >= w.theta).collect();
        let rj: Vec<f64> = idx.iter().map(|&k| w.rho_grid[k]).collect();
        let fj: Vec<f64> = idx.iter().map(|&k| d.w_plus[k].powi(2) * w.mu[k].exp() / w.v[k].powi(2)).collect();
        inner_i.push(trapezoid(&w.rho_grid, &fi));
        inner_j.push(if rj.len() > 1 { trapezoid(&rj, &fj) } else { 0.0 });
    }
    let taus: Vec<f64> = fields.iter().map(|d| d.tau).collect();
    let wi = unit_windows(&taus, &inner_i)?;
    let wj = unit_windows(&taus, &inner_j)?;
    let lhs = wi.iter().map(|(t, v)| v / (-t).sqrt()).fold(0.0, f64::max);
    let rhs = wj.iter().map(|(t, v)| v / (-t).sqrt()).fold(0.0, f64::max);
    Ok(TipEnergyReport {
        taus: wi.iter().map(|p| p.0).collect(),
        i: wi.iter().map(|p| p.1).collect(),
        j: wj.iter().map(|p| p.1).collect(),
        lhs,
        rhs,
        fitted_c: if rhs > 0.0 { lhs * (-tau_star) / rhs } else { 0.0 },
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct OverlapReport {
    /// `(-τ*) sup ∫_{τ-1}^τ ∫ e^{-ξ²/4}(Ĥ_{C,ξ}² + Ĥ_C²)`.
    pub lhs: f64,
    /// `sup ∫_{τ-1}^τ a²`.
    pub rhs: f64,
    pub fitted_c: f64,
}

pub fn overlap_monitor(series: &NeutralSeries, tau_star: f64) -> Result<OverlapReport> {
    let e = unit_windows(&series.taus, &series.hat_energy)?;
    let a2: Vec<f64> = series.a.iter().map(|v| v * v).collect();
    let a = unit_windows(&series.taus, &a2)?;
    let lhs = -tau_star * e.iter().map(|p| p.1).fold(0.0, f64::max);
    let rhs = a.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(OverlapReport { lhs, rhs, fitted_c: if rhs > 0.0 { lhs / rhs } else { 0.0 } })
}

#[derive(Debug, Clone, Serialize)]
pub struct WResidual {
    pub tau: f64,
    pub rho: Vec<f64>,
    pub w: Vec<f64>,
    pub residual: Vec<f64>,
    pub max_residual: f64,
}

/// The difference `W₊` against its evolution equation, with derivatives
/// by central differences (relative step `eta` in ρ, `dtau` in τ).
pub fn w_equation_residual(ctx: &PairContext, rho: &[f64], tau: f64, eta: f64, dtau: f64) -> Result<WResidual> {
    let nn = ctx.n() as f64;
    let tr = &ctx.triplet;
    let v1 = |r: f64, t: f64| ctx.flow1.tip_v(Side::Plus, r, t);
    let v2 = |r: f64, t: f64| v2_beta_gamma(ctx.flow2, Side::Plus, tr.beta, tr.gamma, r, t);
    let mut w_out = vec![];
    let mut res = vec![];
    for &r in rho {
        let dr = eta * r;
        let a = [v1(r - dr, tau)?, v1(r, tau)?, v1(r + dr, tau)?];
        let b = [v2(r - dr, tau)?, v2(r, tau)?, v2(r + dr, tau)?];
        let a_t = (v1(r, tau + dtau)? - v1(r, tau - dtau)?) / (2.0 * dtau);
        let b_t = (v2(r, tau + dtau)? - v2(r, tau - dtau)?) / (2.0 * dtau);
        let (p, q) = (a[1], b[1]);
        let p_r = (a[2] - a[0]) / (2.0 * dr);
        let q_r = (b[2] - b[0]) / (2.0 * dr);
        let w = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        let w_r = (w[2] - w[0]) / (2.0 * dr);
        let w_rr = (w[2] - 2.0 * w[1] + w[0]) / (dr * dr);
        let w_t = a_t - b_t;
        let flux = |k: usize, rr: f64| (nn - 2.0) / rr * (a[k].powi(-2) - 1.0) * w[k];
        let dflux = (flux(2, r + dr) - flux(0, r - dr)) / (2.0 * dr);
        let bb = (nn - 2.0) / (r * r) * (1.0 - p / q)
            + (nn - 2.0) / r * (2.0 / p * p_r - (p + q) / (q * q) * q_r)
            + (p + q) / (q * q) * (b_t + 0.5 * r * q_r);
        let lhs = (w_t + 0.5 * r * w_r) / (p * p);
        let rhs = w_rr + dflux + (nn - 3.0) / r * w_r - 2.0 * (nn - 2.0) / (r * r) * w[1] + bb * w[1] / (p * p);
        w_out.push(w[1]);
        res.push(lhs - rhs);
    }
    let max_residual = res.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(WResidual { tau, rho: rho.to_vec(), w: w_out, residual: res, max_residual })
}
