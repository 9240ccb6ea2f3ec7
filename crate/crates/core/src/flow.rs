//! Rotationally symmetric Ricci flow on S^n in the profile form
//!
//! `F_t = F_zz - (n-2)(1-F_z²)/F - (n-1) F_z ∫_0^z F_zz/F`.
//!
//! Profiles with caps are stored on a uniform grid whose end nodes are the
//! two tips (where `F = 0`). The grid follows the tips: a node with mapped
//! coordinate `s ∈ [-1, 1]` sits at `z₋(1-s)/2 + z₊(1+s)/2`, and the
//! tips move with the velocity `(n-1) ∫_0^{z±} F_zz/F`, which is what the
//! equation gives at a smooth cap.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::bryant::{solve_bryant, to_arclength};
use crate::error::{check_dim, param, Error, Result};
use crate::numerics::{d1_uniform, d2_uniform, locate, solve_tridiagonal, Hermite};

/// End condition of a profile grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Closure {
    /// End nodes are tips with `F = 0`; the grid moves with them.
    Caps,
    /// Fixed window with `F_z = 0` at both ends (cylinder-like data).
    Neumann,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileState {
    pub n: usize,
    pub t: f64,
    pub z_grid: Vec<f64>,
    pub f: Vec<f64>,
    pub z_tip_minus: f64,
    pub z_tip_plus: f64,
    pub closure: Closure,
}

pub const MIN_INTERIOR_POINTS: usize = 32;

pub fn cylinder_radius(n: usize, t: f64) -> f64 {
    (2.0 * (n as f64 - 2.0) * (-t)).sqrt()
}

pub fn sphere_radius(n: usize, t: f64) -> f64 {
    (-2.0 * (n as f64 - 1.0) * t).sqrt()
}

/// `r cos(z/r)` with `r = sqrt(-2(n-1)t)`, and its first two derivatives.
pub fn sphere_profile(n: usize, t: f64, z: f64) -> (f64, f64, f64) {
    let r = sphere_radius(n, t);
    let (s, c) = (z / r).sin_cos();
    (r * c, -s, -c / r)
}

fn uniform(a: f64, b: f64, points: usize) -> Vec<f64> {
    let h = (b - a) / (points - 1) as f64;
    let mut z: Vec<f64> = (0..points).map(|i| a + i as f64 * h).collect();
    z[points - 1] = b;
    z
}

impl ProfileState {
    pub fn new(
        n: usize,
        t: f64,
        z_grid: Vec<f64>,
        f: Vec<f64>,
        closure: Closure,
    ) -> Result<Self> {
        check_dim(n)?;
        if !(t < 0.0) {
            return Err(param("t", "must be negative"));
        }
        if z_grid.len() != f.len() {
            return Err(Error::Grid("z grid and F differ in length".into()));
        }
        if z_grid.len() < MIN_INTERIOR_POINTS + 2 {
            return Err(Error::Grid(format!(
                "{} points given, need at least {} interior points",
                z_grid.len(),
                MIN_INTERIOR_POINTS
            )));
        }
        if z_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid("z grid must be strictly increasing".into()));
        }
        let last = f.len() - 1;
        if let Some(i) = (1..last).find(|&i| !(f[i] > 0.0)) {
            return Err(Error::Pinch { z: z_grid[i], t });
        }
        let (z_tip_minus, z_tip_plus) = (z_grid[0], z_grid[last]);
        Ok(Self { n, t, z_grid, f, z_tip_minus, z_tip_plus, closure })
    }

    /// Round cylinder on `[-half_width, half_width]` with Neumann ends.
    pub fn cylinder(n: usize, t: f64, half_width: f64, points: usize) -> Result<Self> {
        check_dim(n)?;
        let z = uniform(-half_width, half_width, points);
        let f = vec![cylinder_radius(n, t); points];
        Self::new(n, t, z, f, Closure::Neumann)
    }

    /// Round sphere with tips at `±πr/2`.
    pub fn sphere(n: usize, t: f64, points: usize) -> Result<Self> {
        check_dim(n)?;
        if !(t < 0.0) {
            return Err(param("t", "must be negative"));
        }
        let r = sphere_radius(n, t);
        let zt = 0.5 * std::f64::consts::PI * r;
        let z = uniform(-zt, zt, points);
        let mut f: Vec<f64> = z.iter().map(|&z| sphere_profile(n, t, z).0).collect();
        let last = points - 1;
        f[0] = 0.0;
        f[last] = 0.0;
        Self::new(n, t, z, f, Closure::Caps)
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.z_grid[1] - self.z_grid[0]
    }

    pub fn fz(&self) -> Vec<f64> {
        match self.closure {
            Closure::Caps => d1_uniform(&self.f, self.spacing()),
            Closure::Neumann => {
                let mut d = d1_uniform(&self.f, self.spacing());
                let last = d.len() - 1;
                d[0] = 0.0;
                d[last] = 0.0;
                d
            }
        }
    }

    pub fn fzz(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut d = d2_uniform(&self.f, h);
        let last = d.len() - 1;
        match self.closure {
            Closure::Caps => {
                d[0] = 0.0;
                d[last] = 0.0;
            }
            Closure::Neumann => {
                d[0] = 2.0 * (self.f[1] - self.f[0]) / (h * h);
                d[last] = 2.0 * (self.f[last - 1] - self.f[last]) / (h * h);
            }
        }
        d
    }

    /// `F_zz/F` at every node; at caps the end values are extrapolated.
    pub fn curvature_ratio(&self) -> Vec<f64> {
        let fzz = self.fzz();
        let mut q: Vec<f64> = fzz.iter().zip(&self.f).map(|(a, b)| a / b).collect();
        if self.closure == Closure::Caps {
            let h = self.spacing();
            let m = q.len() - 1;
            let left = CapFit::new(&self.f[..=CAP_FIT_NODES], h);
            let right: Vec<f64> = self.f[m - CAP_FIT_NODES..].iter().rev().cloned().collect();
            let right = CapFit::new(&right, h);
            for k in 0..=CAP_REPLACED_NODES {
                let d = k as f64 * h;
                q[k] = left.ratio(d);
                q[m - k] = right.ratio(d);
            }
        }
        q
    }

    /// `I(z) = ∫_0^z F_zz/F` at every node (trapezoid from the left end,
    /// shifted so that I(0) = 0).
    pub fn nonlocal_integral(&self) -> Vec<f64> {
        nonlocal_from_ratio(&self.z_grid, &self.curvature_ratio())
    }

    /// Tip velocities `(ż₋, ż₊)`; zero for Neumann windows.
    pub fn tip_velocities(&self) -> (f64, f64) {
        self.tip_velocities_from(&self.nonlocal_integral())
    }

    fn tip_velocities_from(&self, i: &[f64]) -> (f64, f64) {
        match self.closure {
            Closure::Caps => {
                let c = self.n as f64 - 1.0;
                let h = self.spacing();
                let m = self.f.len() - 1;
                let left = CapFit::new(&self.f[..=CAP_FIT_NODES], h);
                let right: Vec<f64> = self.f[m - CAP_FIT_NODES..].iter().rev().cloned().collect();
                let right = CapFit::new(&right, h);
                let kappa = CAP_RELAXATION / (CAP_FIT_NODES as f64 * h);
                (
                    c * i[0] - kappa * (left.slope() - 1.0),
                    c * i[m] + kappa * (right.slope() - 1.0),
                )
            }
            Closure::Neumann => (0.0, 0.0),
        }
    }

    /// Largest step allowed by the stability guard.
    pub fn stable_dt(&self) -> f64 {
        let h = self.spacing();
        let last = self.f.len() - 1;
        let fmin = self.f[1..last].iter().cloned().fold(f64::INFINITY, f64::min);
        let fmin = match self.closure {
            Closure::Caps => fmin,
            Closure::Neumann => fmin.min(self.f[0]).min(self.f[last]),
        };
        0.25 * (h * h).min(fmin * fmin / (self.n as f64 - 2.0))
    }

    /// `F_t` at fixed z from the equation (interior nodes; zero at tips).
    pub fn time_derivative(&self) -> Vec<f64> {
        let fz = self.fz();
        let fzz = self.fzz();
        let i = self.nonlocal_integral();
        let nn = self.n as f64;
        let last = self.f.len() - 1;
        (0..self.f.len())
            .map(|k| {
                if self.closure == Closure::Caps && (k == 0 || k == last) {
                    return 0.0;
                }
                fzz[k] - (nn - 2.0) * (1.0 - fz[k] * fz[k]) / self.f[k] - (nn - 1.0) * fz[k] * i[k]
            })
            .collect()
    }

    /// Explicit part at fixed mapped coordinate: reaction, nonlocal drift
    /// and grid motion. Returns it with the tip velocities used.
    fn explicit_part(&self) -> (Vec<f64>, (f64, f64)) {
        let h = self.spacing();
        let i = self.nonlocal_integral();
        let (vm, vp) = self.tip_velocities_from(&i);
        let nn = self.n as f64;
        let m = self.f.len();
        let last = m - 1;
        let mut out = vec![0.0; m];
        for k in 0..m {
            let fz = if k == 0 || k == last {
                if self.closure == Closure::Caps {
                    continue;
                }
                0.0
            } else {
                (self.f[k + 1] - self.f[k - 1]) / (2.0 * h)
            };
            let s = -1.0 + 2.0 * k as f64 / last as f64;
            let v = 0.5 * (vm * (1.0 - s) + vp * (1.0 + s));
            out[k] = -(nn - 2.0) * (1.0 - fz * fz) / self.f[k] - (nn - 1.0) * fz * i[k] + v * fz;
        }
        (out, (vm, vp))
    }

    fn d2_operator(&self, f: &[f64], h: f64) -> Vec<f64> {
        let m = f.len();
        let last = m - 1;
        let mut out = vec![0.0; m];
        for k in 1..last {
            out[k] = (f[k + 1] - 2.0 * f[k] + f[k - 1]) / (h * h);
        }
        if self.closure == Closure::Neumann {
            out[0] = 2.0 * (f[1] - f[0]) / (h * h);
            out[last] = 2.0 * (f[last - 1] - f[last]) / (h * h);
        }
        out
    }

    /// Solves `(1 - c D²) u = rhs` with the closure's end conditions.
    fn implicit_solve(&self, rhs: &[f64], c: f64, h: f64) -> Result<Vec<f64>> {
        let m = rhs.len();
        let last = m - 1;
        let r = c / (h * h);
        let mut a = vec![-r; m];
        let mut b = vec![1.0 + 2.0 * r; m];
        let mut cc = vec![-r; m];
        let mut d = rhs.to_vec();
        match self.closure {
            Closure::Caps => {
                a[0] = 0.0;
                b[0] = 1.0;
                cc[0] = 0.0;
                d[0] = 0.0;
                a[last] = 0.0;
                b[last] = 1.0;
                cc[last] = 0.0;
                d[last] = 0.0;
            }
            Closure::Neumann => {
                a[0] = 0.0;
                cc[0] = -2.0 * r;
                a[last] = -2.0 * r;
                cc[last] = 0.0;
            }
        }
        solve_tridiagonal(&a, &b, &cc, &d)
    }

    fn with_tips(&self, f: Vec<f64>, zm: f64, zp: f64, t: f64) -> Result<Self> {
        let m = f.len();
        let z_grid = match self.closure {
            Closure::Caps => {
                if !(zp > zm) {
                    return Err(Error::Pinch { z: 0.5 * (zm + zp), t });
                }
                uniform(zm, zp, m)
            }
            Closure::Neumann => self.z_grid.clone(),
        };
        let last = m - 1;
        if let Some(i) = (1..last).find(|&i| !(f[i] > 0.0)) {
            return Err(Error::Pinch { z: z_grid[i], t });
        }
        if self.closure == Closure::Neumann && !(f[0] > 0.0 && f[last] > 0.0) {
            return Err(Error::Pinch { z: z_grid[0], t });
        }
        Ok(Self { n: self.n, t, z_grid, f, z_tip_minus: zm, z_tip_plus: zp, closure: self.closure })
    }

    /// One second-order IMEX step: diffusion implicit in the stage,
    /// everything else explicit.
    pub fn step(&self, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(param("dt", "must be positive"));
        }
        let limit = self.stable_dt();
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, limit });
        }
        let m = self.f.len();
        let (n0, (vm0, vp0)) = self.explicit_part();
        let zm_half = self.z_tip_minus + 0.5 * dt * vm0;
        let zp_half = self.z_tip_plus + 0.5 * dt * vp0;
        let h_half = match self.closure {
            Closure::Caps => (zp_half - zm_half) / (m - 1) as f64,
            Closure::Neumann => self.spacing(),
        };
        let rhs: Vec<f64> = (0..m).map(|k| self.f[k] + 0.5 * dt * n0[k]).collect();
        let f_half = self.implicit_solve(&rhs, 0.5 * dt, h_half)?;
        let mid = self.with_tips(f_half, zm_half, zp_half, self.t + 0.5 * dt)?;
        let (n1, (vm1, vp1)) = mid.explicit_part();
        let lap = mid.d2_operator(&mid.f, h_half);
        let mut f_new: Vec<f64> = (0..m).map(|k| self.f[k] + dt * (lap[k] + n1[k])).collect();
        if self.closure == Closure::Caps {
            f_new[0] = 0.0;
            f_new[m - 1] = 0.0;
        }
        self.with_tips(f_new, self.z_tip_minus + dt * vm1, self.z_tip_plus + dt * vp1, self.t + dt)
    }

    /// Steps with the largest guarded dt up to `t_end`, landing on it exactly.
    pub fn evolve_to(&self, t_end: f64, safety: f64) -> Result<Self> {
        let mut s = self.clone();
        while s.t < t_end {
            let dt = (safety * s.stable_dt()).min(t_end - s.t);
            s = s.step(dt)?;
            if t_end - s.t < 1e-12 * t_end.abs() {
                s.t = t_end;
                break;
            }
        }
        Ok(s)
    }

    /// `count` steps of exactly `dt`; returns all `count + 1` states.
    pub fn history(&self, dt: f64, count: usize) -> Result<Vec<Self>> {
        let mut out = Vec::with_capacity(count + 1);
        out.push(self.clone());
        for _ in 0..count {
            let next = out.last().unwrap().step(dt)?;
            out.push(next);
        }
        Ok(out)
    }

    /// Monotone cubic interpolant of F in z.
    pub fn interpolant(&self) -> Hermite {
        Hermite::monotone(self.z_grid.clone(), self.f.clone())
    }

    /// Smooth interpolant whose node slopes are the finite-difference F_z.
    pub fn smooth_interpolant(&self) -> Hermite {
        Hermite::new(self.z_grid.clone(), self.f.clone(), self.fz())
    }

    /// Scalar curvature at the `+` tip from the extrapolated `F_zz/F`.
    pub fn tip_scalar_curvature(&self) -> f64 {
        let q = self.curvature_ratio();
        let nn = self.n as f64;
        -nn * (nn - 1.0) * q[q.len() - 1]
    }
}

/// Nodes used by the least-squares cap fit at each tip.
pub const CAP_FIT_NODES: usize = 8;
/// Rate at which a tip slope defect `|F_z| - 1` is relaxed, in units of
/// the fit width.
pub const CAP_RELAXATION: f64 = 40.0;
/// Nodes next to each tip whose `F_zz/F` is taken from the fit.
pub const CAP_REPLACED_NODES: usize = 3;

/// `F ≈ a d + b d³ + c d⁵` in the distance `d` to a tip, fitted by least
/// squares. Point values of `F_zz/F` near a tip amplify grid noise like
/// `h⁻³`; the fit does not.
#[derive(Debug, Clone, Copy)]
pub struct CapFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    scale: f64,
}

impl CapFit {
    /// `f[0]` is the tip value, `f[k]` sits at distance `k h`.
    pub fn new(f: &[f64], h: f64) -> Self {
        let scale = (f.len() - 1) as f64 * h;
        let mut ata = Matrix3::<f64>::zeros();
        let mut atb = Vector3::<f64>::zeros();
        for (k, &v) in f.iter().enumerate().skip(1) {
            let x = k as f64 * h / scale;
            let row = Vector3::new(x, x.powi(3), x.powi(5));
            ata += row * row.transpose();
            atb += row * v;
        }
        let sol = ata.lu().solve(&atb).unwrap_or_else(|| Vector3::new(scale, 0.0, 0.0));
        Self { a: sol[0], b: sol[1], c: sol[2], scale }
    }

    /// `F_dd/F` of the fit at distance `d`.
    pub fn ratio(&self, d: f64) -> f64 {
        let x = d / self.scale;
        let x2 = x * x;
        (6.0 * self.b + 20.0 * self.c * x2) / (self.scale * self.scale * (self.a + self.b * x2 + self.c * x2 * x2))
    }

    /// Slope of the fit at the tip.
    pub fn slope(&self) -> f64 {
        self.a / self.scale
    }
}

pub(crate) fn nonlocal_from_ratio(z: &[f64], q: &[f64]) -> Vec<f64> {
    let m = z.len();
    let mut cum = vec![0.0; m];
    for k in 1..m {
        cum[k] = cum[k - 1] + 0.5 * (z[k] - z[k - 1]) * (q[k] + q[k - 1]);
    }
    let at0 = if z[0] >= 0.0 {
        -integrate_linear(z[0], q[0], 0.0, q[0], 0.0)
    } else if z[m - 1] <= 0.0 {
        cum[m - 1] + integrate_linear(z[m - 1], q[m - 1], z[m - 1], q[m - 1], 0.0)
    } else {
        let j = locate(z, 0.0);
        cum[j] + integrate_linear(z[j], q[j], z[j + 1], q[j + 1], 0.0)
    };
    cum.iter().map(|c| c - at0).collect()
}

/// ∫ from `za` to `x` of the line through (za, qa), (zb, qb).
fn integrate_linear(za: f64, qa: f64, zb: f64, qb: f64, x: f64) -> f64 {
    let slope = if zb != za { (qb - qa) / (zb - za) } else { 0.0 };
    let d = x - za;
    qa * d + 0.5 * slope * d * d
}

/// Approximate ancient oval data.
#[derive(Debug, Clone, Serialize)]
pub struct OvalParams {
    pub points: usize,
    /// Cap radius at the centre of the gluing zone, as a fraction of the
    /// neck radius `sqrt(2(n-2)(-t))`.
    pub glue_radius_fraction: f64,
    /// Half-width of the gluing zone as a fraction of the cap arclength at
    /// its centre.
    pub glue_halfwidth_fraction: f64,
}

impl Default for OvalParams {
    fn default() -> Self {
        Self { points: 401, glue_radius_fraction: 0.5, glue_halfwidth_fraction: 0.5 }
    }
}

/// Summary of how the oval was assembled.
#[derive(Debug, Clone, Serialize)]
pub struct OvalLayout {
    pub log_t: f64,
    pub cap_scale: f64,
    pub parabola_zero: f64,
    pub glue_center: f64,
    pub glue_halfwidth: f64,
    pub tip: f64,
}

fn blend(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / x).exp();
        let b = (-1.0 / (1.0 - x)).exp();
        a / (a + b)
    }
}

/// Parabolic cylinder `F² = 2(n-2)[(-t) - (z²+2t)/(4 log(-t))]` in the
/// middle, glued to Bryant caps scaled by `sqrt((-t)/log(-t))`.
pub fn make_oval_initial_data(n: usize, t0: f64, params: &OvalParams) -> Result<(ProfileState, OvalLayout)> {
    check_dim(n)?;
    if !(t0 < 0.0) || (-t0).ln() < 4.0 {
        return Err(param("t0", "need log(-t0) >= 4 for the log corrections"));
    }
    if params.points < MIN_INTERIOR_POINTS + 2 {
        return Err(Error::Grid(format!("need at least {} interior points", MIN_INTERIOR_POINTS)));
    }
    if !(params.glue_radius_fraction > 0.0 && params.glue_radius_fraction < 1.0) {
        return Err(param("glue_radius_fraction", "must lie in (0, 1)"));
    }
    if !(params.glue_halfwidth_fraction > 0.0 && params.glue_halfwidth_fraction < 1.0) {
        return Err(param("glue_halfwidth_fraction", "must lie in (0, 1)"));
    }
    let nn = n as f64;
    let lt = (-t0).ln();
    let lam = ((-t0) / lt).sqrt();
    // Cap radius at the glue point, in tip-normalized units.
    let b_glue = params.glue_radius_fraction * (2.0 * (nn - 2.0) * lt).sqrt();
    let w_guess = b_glue * b_glue / (2.0 * (nn - 2.0));
    let w_cap = 4.0 * w_guess + 10.0;
    let bryant = solve_bryant(n, 2.0 * (2.0 * (nn - 2.0) * w_cap).sqrt() + 20.0, 1e-10)?;
    let arc = to_arclength(&bryant, w_cap)?;
    let w_glue = crate::numerics::bisect(|w| arc.eval(w).0 - b_glue, 0.0, w_cap, 1e-12)
        .ok_or_else(|| Error::Range("glue radius beyond the cap table".into()))?;
    let w_half = params.glue_halfwidth_fraction * w_glue;
    let zp2 = (-t0) * (4.0 * lt + 2.0);
    let parab = |z: f64| 2.0 * (nn - 2.0) * (zp2 - z * z) / (4.0 * lt);
    let zg2 = zp2 - 2.0 * lt * lam * lam * b_glue * b_glue / (nn - 2.0);
    let width = lam * w_half;
    if zg2 <= width * width {
        return Err(param("glue", "gluing zone reaches the centre"));
    }
    let zg = zg2.sqrt();
    let tip = zg + lam * w_glue;
    let z = uniform(-tip, tip, params.points);
    let cap = |d: f64| {
        let (b, _) = arc.eval(d / lam);
        lam * lam * b * b
    };
    let last = params.points - 1;
    let mut f: Vec<f64> = z
        .iter()
        .map(|&zz| {
            let a = zz.abs();
            let w = blend((a - (zg - width)) / (2.0 * width));
            let f2 = if w <= 0.0 {
                parab(a)
            } else if w >= 1.0 {
                cap(tip - a)
            } else {
                (1.0 - w) * parab(a).max(0.0) + w * cap(tip - a)
            };
            f2.max(0.0).sqrt()
        })
        .collect();
    f[0] = 0.0;
    f[last] = 0.0;
    let state = ProfileState::new(n, t0, z, f, Closure::Caps)?;
    Ok((
        state,
        OvalLayout { log_t: lt, cap_scale: lam, parabola_zero: zp2.sqrt(), glue_center: zg, glue_halfwidth: width, tip },
    ))
}

/// Extinction time of a closed profile: evolves until the largest radius
/// falls below `fraction` of its initial value, then extrapolates `F_max²`
/// linearly in t (exact for round spheres).
pub fn extinction_time(state: &ProfileState, fraction: f64) -> Result<f64> {
    if state.closure != Closure::Caps {
        return Err(param("closure", "extinction needs a closed profile"));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(param("fraction", "must lie in (0, 1)"));
    }
    let fmax = |s: &ProfileState| s.f.iter().cloned().fold(0.0, f64::max);
    let target = fraction * fmax(state);
    let mut prev = state.clone();
    let mut cur = state.step(state.stable_dt())?;
    while fmax(&cur) > target {
        let next = cur.step(cur.stable_dt())?;
        prev = cur;
        cur = next;
    }
    let (a, b) = (fmax(&prev).powi(2), fmax(&cur).powi(2));
    Ok(cur.t + b * (cur.t - prev.t) / (a - b))
}

/// Relabels the clock so the flow from `state` goes extinct at `t = 0`.
/// The equation is autonomous, so this only shifts `t`.
pub fn calibrate_extinction(state: &ProfileState, fraction: f64) -> Result<ProfileState> {
    let te = extinction_time(state, fraction)?;
    let mut out = state.clone();
    out.t -= te;
    if !(out.t < 0.0) {
        return Err(Error::Range(format!("extinction at {te} leaves no negative time")));
    }
    Ok(out)
}

pub fn alpha_n(n: usize) -> f64 {
    if n == 4 {
        0.0
    } else {
        1.0
    }
}

/// `H = F²/2 + (n-2)t`, `K = F_z⁴`, `Q = H_zz - α(n)K`.
///
/// `hzz` and `q` hold interior nodes only (`z_grid[1..len-1]`).
#[derive(Debug, Clone, Serialize)]
pub struct DerivedFields {
    pub z_grid: Vec<f64>,
    pub hq: Vec<f64>,
    pub kq: Vec<f64>,
    pub hzz: Vec<f64>,
    pub q: Vec<f64>,
    pub alpha_n: f64,
}

pub fn derived_fields(state: &ProfileState) -> DerivedFields {
    let nn = state.n as f64;
    let h = state.spacing();
    let hq: Vec<f64> = state.f.iter().map(|f| 0.5 * f * f + (nn - 2.0) * state.t).collect();
    let fz = state.fz();
    let kq: Vec<f64> = fz.iter().map(|d| d.powi(4)).collect();
    let m = hq.len();
    let hzz: Vec<f64> = (1..m - 1).map(|i| (hq[i + 1] - 2.0 * hq[i] + hq[i - 1]) / (h * h)).collect();
    let alpha = alpha_n(state.n);
    let q = (1..m - 1).map(|i| hzz[i - 1] - alpha * kq[i]).collect();
    DerivedFields { z_grid: state.z_grid.clone(), hq, kq, hzz, q, alpha_n: alpha }
}

/// Residuals of the H, H_zz and K evolution identities.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub h_residual: f64,
    pub hzz_residual: f64,
    pub k_residual: f64,
    pub points: usize,
    pub states_used: usize,
}

/// Evaluates each identity at the middle states of a uniform-dt history on
/// nodes with mapped coordinate `|s| <= s_window`. Time derivatives are
/// centred differences at fixed node index corrected for grid motion.
pub fn verify_evolution_identities(history: &[ProfileState], s_window: f64) -> Result<IdentityReport> {
    if history.len() < 3 {
        return Err(Error::HistoryTooShort { need: 3, got: history.len() });
    }
    let dt = history[1].t - history[0].t;
    for w in history.windows(2) {
        if ((w[1].t - w[0].t) - dt).abs() > 1e-9 * dt.abs().max(1e-300) {
            return Err(param("history", "time steps must be uniform"));
        }
        if w[1].len() != w[0].len() {
            return Err(Error::Grid("states differ in grid size".into()));
        }
    }
    let nn = history[0].n as f64;
    let m = history[0].len();
    let last = m - 1;
    let fields = |s: &ProfileState| {
        let h = s.spacing();
        let hq: Vec<f64> = s.f.iter().map(|f| 0.5 * f * f + (nn - 2.0) * s.t).collect();
        let hzz = d2_uniform(&hq, h);
        let k: Vec<f64> = s.fz().iter().map(|d| d.powi(4)).collect();
        (hq, hzz, k)
    };
    let per_state: Vec<_> = history.iter().map(fields).collect();
    let (mut rh, mut rhzz, mut rk) = (0.0f64, 0.0f64, 0.0f64);
    let mut count = 0;
    for j in 1..history.len() - 1 {
        let s = &history[j];
        let h = s.spacing();
        let (hq, hzz, k) = &per_state[j];
        let (hq_p, hzz_p, k_p) = &per_state[j + 1];
        let (hq_m, hzz_m, k_m) = &per_state[j - 1];
        let fz = s.fz();
        let fzz = s.fzz();
        let i = s.nonlocal_integral();
        let hz = d1_uniform(hq, h);
        let hzzz = d1_uniform(hzz, h);
        let hzzzz = d2_uniform(hzz, h);
        let hzz_z = hzzz.clone();
        let hzz_zz = hzzzz.clone();
        let kz = d1_uniform(k, h);
        let kzz = d2_uniform(k, h);
        for idx in 3..last - 2 {
            let sc = -1.0 + 2.0 * idx as f64 / last as f64;
            if sc.abs() > s_window {
                continue;
            }
            let v = (history[j + 1].z_grid[idx] - history[j - 1].z_grid[idx]) / (2.0 * dt);
            let f = s.f[idx];
            let ht = (hq_p[idx] - hq_m[idx]) / (2.0 * dt) - v * hz[idx];
            let hzzt = (hzz_p[idx] - hzz_m[idx]) / (2.0 * dt) - v * hzz_z[idx];
            let kt = (k_p[idx] - k_m[idx]) / (2.0 * dt) - v * kz[idx];
            let drift = (nn - 5.0) * fz[idx] / f - (nn - 1.0) * i[idx];
            let r1 = ht - hzz[idx] - (nn - 3.0) * hz[idx] * hz[idx] / (f * f) + (nn - 1.0) * hz[idx] * i[idx];
            let r2 = hzzt - hzz_zz[idx] - drift * hzzz[idx]
                + 4.0 * (nn - 4.0) * fz[idx] * fz[idx] * fzz[idx] / f
                + 4.0 * fzz[idx] * fzz[idx];
            let r3 = kt - kzz[idx] - drift * kz[idx] - 8.0 * fz[idx].powi(4) * fzz[idx] / f
                + 12.0 * fz[idx] * fz[idx] * fzz[idx] * fzz[idx]
                - 4.0 * (nn - 2.0) * (1.0 - fz[idx] * fz[idx]) * fz[idx].powi(4) / (f * f);
            rh = rh.max(r1.abs());
            rhzz = rhzz.max(r2.abs());
            rk = rk.max(r3.abs());
            count += 1;
        }
    }
    Ok(IdentityReport {
        h_residual: rh,
        hzz_residual: rhzz,
        k_residual: rk,
        points: count,
        states_used: history.len() - 2,
    })
}

/// Curvatures of `dz² + F² g_{S^{n-1}}` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointCurvature {
    pub k_rad: f64,
    pub k_orb: f64,
    pub r: f64,
    pub lambda1: f64,
}

pub fn point_curvature(n: usize, f: f64, fz: f64, fzz: f64) -> PointCurvature {
    let nn = n as f64;
    let k_rad = -fzz / f;
    let k_orb = (1.0 - fz * fz) / (f * f);
    PointCurvature {
        k_rad,
        k_orb,
        r: (nn - 1.0) * (2.0 * k_rad + (nn - 2.0) * k_orb),
        lambda1: ((nn - 1.0) * k_rad).min(k_rad + (nn - 2.0) * k_orb),
    }
}

/// PIC and PIC2 quantities for a curvature operator that is diagonal on
/// coordinate two-planes with sectional curvatures `k_rad` (planes through
/// the radial direction) and `k_orb`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PicPoint {
    /// `min(2K_orb + 2K_rad, 4K_orb)`.
    pub pic: f64,
    /// Frobenius norm `(Σ_{ijkl} R_ijkl²)^{1/2}`.
    pub rm_norm: f64,
    pub pic2_min: f64,
    pub pic2_lambda: f64,
    pub pic2_mu: f64,
}

pub const PIC2_GRID: usize = 21;

pub fn pic_point(n: usize, k_rad: f64, k_orb: f64) -> PicPoint {
    let nn = n as f64;
    let pic = (2.0 * k_orb + 2.0 * k_rad).min(4.0 * k_orb);
    let rm_norm = 2.0 * ((nn - 1.0) * k_rad * k_rad + 0.5 * (nn - 1.0) * (nn - 2.0) * k_orb * k_orb).sqrt();
    let sec = |radial: usize, i: usize, j: usize| if radial == i || radial == j { k_rad } else { k_orb };
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for radial in 0..=4 {
        for a in 0..PIC2_GRID {
            let l = a as f64 / (PIC2_GRID - 1) as f64;
            for b in 0..PIC2_GRID {
                let m = b as f64 / (PIC2_GRID - 1) as f64;
                let v = sec(radial, 1, 3)
                    + l * l * sec(radial, 1, 4)
                    + m * m * sec(radial, 2, 3)
                    + l * l * m * m * sec(radial, 2, 4);
                if v < best.0 {
                    best = (v, l, m);
                }
            }
        }
    }
    PicPoint { pic, rm_norm, pic2_min: best.0, pic2_lambda: best.1, pic2_mu: best.2 }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvatureField {
    pub z: Vec<f64>,
    pub k_rad: Vec<f64>,
    pub k_orb: Vec<f64>,
    pub r: Vec<f64>,
    pub lambda1: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PicReport {
    /// Largest α with PIC ≥ α|Rm| at every evaluated point.
    pub uniform_pic: f64,
    pub pic_min: f64,
    pub pic2_min: f64,
    pub pic2_argmin: (f64, f64),
    pub r_min: f64,
}

/// Curvature fields on nodes at least three cells from a tip, and the
/// PIC/PIC2 summary over them.
pub fn curvature_and_pic(state: &ProfileState) -> (CurvatureField, PicReport) {
    let fz = state.fz();
    let fzz = state.fzz();
    let m = state.len();
    let range = match state.closure {
        Closure::Caps => 3..m - 3,
        Closure::Neumann => 0..m,
    };
    let mut field = CurvatureField { z: vec![], k_rad: vec![], k_orb: vec![], r: vec![], lambda1: vec![] };
    let mut rep = PicReport {
        uniform_pic: f64::INFINITY,
        pic_min: f64::INFINITY,
        pic2_min: f64::INFINITY,
        pic2_argmin: (0.0, 0.0),
        r_min: f64::INFINITY,
    };
    for i in range {
        let c = point_curvature(state.n, state.f[i], fz[i], fzz[i]);
        let p = pic_point(state.n, c.k_rad, c.k_orb);
        field.z.push(state.z_grid[i]);
        field.k_rad.push(c.k_rad);
        field.k_orb.push(c.k_orb);
        field.r.push(c.r);
        field.lambda1.push(c.lambda1);
        rep.uniform_pic = rep.uniform_pic.min(p.pic / p.rm_norm);
        rep.pic_min = rep.pic_min.min(p.pic);
        if p.pic2_min < rep.pic2_min {
            rep.pic2_min = p.pic2_min;
            rep.pic2_argmin = (p.pic2_lambda, p.pic2_mu);
        }
        rep.r_min = rep.r_min.min(c.r);
    }
    (field, rep)
}

#[derive(Debug, Clone, Serialize)]
pub struct NeckReport {
    pub log_t: f64,
    pub points: usize,
    /// max |F²/2 - (n-2)[(-t) - (z²+2t)/(4 log(-t))]| / (η (z²-t)/log(-t)).
    pub profile_ratio: f64,
    /// max |F F_z + (n-2)z/(2 log(-t))| / (η (|z|+sqrt(-t))/log(-t)).
    pub gradient_ratio: f64,
    /// max |n-2 + F F_t| · sqrt(log(-t)): the fitted constant C(θ).
    pub time_constant: f64,
    /// max |F_z| · sqrt(log(-t)).
    pub slope_constant: f64,
    /// max |F_z| + F|F_zz| over the region.
    pub neck_quality: f64,
}

/// Evaluates the neck estimates on `F >= (θ/100) sqrt(-t)`.
pub fn neck_asymptotics_check(state: &ProfileState, theta: f64, eta: f64) -> Result<NeckReport> {
    if !(eta > 0.0) {
        return Err(param("eta", "must be positive"));
    }
    let nn = state.n as f64;
    let mt = -state.t;
    let lt = mt.ln();
    let fz = state.fz();
    let fzz = state.fzz();
    let ft = state.time_derivative();
    let floor = theta / 100.0 * mt.sqrt();
    let m = state.len();
    let mut rep = NeckReport {
        log_t: lt,
        points: 0,
        profile_ratio: 0.0,
        gradient_ratio: 0.0,
        time_constant: 0.0,
        slope_constant: 0.0,
        neck_quality: 0.0,
    };
    for i in 1..m - 1 {
        let (z, f) = (state.z_grid[i], state.f[i]);
        if f < floor {
            continue;
        }
        rep.points += 1;
        let model = (nn - 2.0) * (mt - (z * z + 2.0 * state.t) / (4.0 * lt));
        rep.profile_ratio = rep.profile_ratio.max((0.5 * f * f - model).abs() / (eta * (z * z - state.t) / lt));
        rep.gradient_ratio = rep
            .gradient_ratio
            .max((f * fz[i] + (nn - 2.0) * z / (2.0 * lt)).abs() / (eta * (z.abs() + mt.sqrt()) / lt));
        rep.time_constant = rep.time_constant.max((nn - 2.0 + f * ft[i]).abs() * lt.sqrt());
        rep.slope_constant = rep.slope_constant.max(fz[i].abs() * lt.sqrt());
        rep.neck_quality = rep.neck_quality.max(fz[i].abs() + f * fzz[i].abs());
    }
    if rep.points == 0 {
        return Err(Error::Range("no nodes with F >= (θ/100) sqrt(-t)".into()));
    }
    Ok(rep)
}

#[derive(Debug, Clone, Serialize)]
pub struct SReport {
    pub z: Vec<f64>,
    pub s: Vec<f64>,
    /// Intervals with Q ≤ 0 at both ends where `-S^{-1/2}` increases.
    pub monotonicity_violations: usize,
    /// Points where the finite-difference S_z and Q have opposite signs
    /// (ignoring |Q| below `q_floor`).
    pub sign_mismatches: usize,
    /// Identity error measured on `T = -S^{-1/2}`:
    /// max |T_z - Q/(1-αF_z²)^{3/2}| / max |Q/(1-αF_z²)^{3/2}|.
    pub identity_error: f64,
    /// Absolute identity error, the level below which signs are not compared.
    pub q_floor: f64,
}

/// `S = 1/(F² F_z²) - α/F²` on the `+` side where `F_z < 0` and
/// `F >= θ sqrt(-t)/200`, short of the cap-fitted nodes.
pub fn s_monotone_quantity(state: &ProfileState, alpha: f64, theta: f64) -> Result<SReport> {
    let fz = state.fz();
    let fzz = state.fzz();
    let h = state.spacing();
    let floor = theta * (-state.t).sqrt() / 200.0;
    let m = state.len();
    let start = match state.z_grid.iter().position(|&z| z > 0.0) {
        Some(i) => i.max(1),
        None => return Err(Error::Range("no nodes with z > 0".into())),
    };
    // nodes written by the cap fit are not PDE values
    let end = match state.closure {
        Closure::Caps => m - 1 - CAP_FIT_NODES,
        Closure::Neumann => m - 1,
    };
    let idx: Vec<usize> = (start..end).filter(|&i| state.f[i] >= floor && fz[i] < 0.0).collect();
    if idx.len() < 3 {
        return Err(Error::Range("region F_z < 0, F >= θ sqrt(-t)/200 is too small".into()));
    }
    if idx.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::Monotonicity {
            lo: state.z_grid[idx[0]],
            hi: state.z_grid[idx[idx.len() - 1]],
        });
    }
    let s_of = |i: usize| {
        let f = state.f[i];
        1.0 / (f * f * fz[i] * fz[i]) - alpha / (f * f)
    };
    let mut rep = SReport {
        z: idx.iter().map(|&i| state.z_grid[i]).collect(),
        s: idx.iter().map(|&i| s_of(i)).collect(),
        monotonicity_violations: 0,
        sign_mismatches: 0,
        identity_error: 0.0,
        q_floor: 0.0,
    };
    let qv: Vec<f64> = idx
        .iter()
        .map(|&i| state.f[i] * fzz[i] + fz[i] * fz[i] - alpha * fz[i].powi(4))
        .collect();
    // T = -S^{-1/2} is smooth where S is not (F_z -> 0 at the neck), and
    // T_z = Q / (1 - α F_z²)^{3/2} is the same identity as S_z = 2Q/(F³(-F_z)³).
    let t_of = |i: usize| -s_of(i).powf(-0.5);
    let mut tz = vec![0.0; idx.len()];
    let mut pred = vec![0.0; idx.len()];
    let (mut pmax, mut err) = (0.0f64, 0.0f64);
    for k in 1..idx.len() - 1 {
        let i = idx[k];
        tz[k] = (t_of(i + 1) - t_of(i - 1)) / (2.0 * h);
        pred[k] = qv[k] / (1.0 - alpha * fz[i] * fz[i]).powf(1.5);
        pmax = pmax.max(pred[k].abs());
        err = err.max((tz[k] - pred[k]).abs());
    }
    rep.q_floor = err;
    for k in 1..idx.len() - 1 {
        if qv[k].abs() > rep.q_floor && tz[k] * qv[k] < 0.0 {
            rep.sign_mismatches += 1;
        }
        if qv[k] <= 0.0 && qv[k + 1] <= 0.0 && t_of(idx[k + 1]) > t_of(idx[k]) {
            rep.monotonicity_violations += 1;
        }
    }
    rep.identity_error = if pmax > 0.0 { err / pmax } else { 0.0 };
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cylinder_step_matches_ode() {
        let s = ProfileState::cylinder(4, -10.0, 5.0, 64).unwrap();
        let dt = s.stable_dt().min(0.01);
        let next = s.step(dt).unwrap();
        // F' = -(n-2)/F; the step is the explicit midpoint rule for it.
        let f0 = s.f[0];
        let half = f0 - 0.5 * dt * 2.0 / f0;
        let midpoint = f0 - dt * 2.0 / half;
        let exact = (f0 * f0 - 2.0 * 2.0 * dt).sqrt();
        for v in &next.f {
            assert!((v - midpoint).abs() / midpoint < 1e-13);
            assert!((v - exact).abs() < dt.powi(3));
        }
    }

    #[test]
    fn sphere_tip_speed() {
        let s = ProfileState::sphere(5, -1.0, 401).unwrap();
        let (vm, vp) = s.tip_velocities();
        let r = sphere_radius(5, -1.0);
        let exact = -(4.0) * std::f64::consts::PI / (2.0 * r);
        assert!((vp - exact).abs() < 1e-3 * exact.abs());
        assert!((vm + exact).abs() < 1e-3 * exact.abs());
    }

    #[test]
    fn nonlocal_integral_zero_at_origin() {
        let z: Vec<f64> = (0..11).map(|i| -2.3 + 0.5 * i as f64).collect();
        let q = vec![1.0; 11];
        let i = nonlocal_from_ratio(&z, &q);
        for (zz, ii) in z.iter().zip(&i) {
            assert!((zz - ii).abs() < 1e-13);
        }
    }

    #[test]
    fn alpha_rule() {
        assert_eq!(alpha_n(4), 0.0);
        assert_eq!(alpha_n(5), 1.0);
        assert_eq!(alpha_n(9), 1.0);
    }

    #[test]
    fn rejects_small_grids() {
        assert!(ProfileState::cylinder(4, -1.0, 1.0, 20).is_err());
    }
}
