//! Gaussian-weighted function spaces on the line.
//!
//! Everything lives in `L²(R, e^{-ξ²/4} dξ)`. The operator
//! `𝓛f = f'' - ξf'/2 + f` is diagonal in the Hermite-type basis
//! `h_k(ξ) = H_k(ξ/2)` with eigenvalue `1 - k/2`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::numerics::{d1_uniform, d2_uniform, simpson_uniform, trapezoid};

pub const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Gauss–Hermite rule for the weight `e^{-x²}`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Nodes by Newton iteration on the orthonormal Hermite recurrence.
    pub fn new(m: usize) -> Self {
        let mut x = vec![0.0; m];
        let mut w = vec![0.0; m];
        let pim4 = SQRT_PI.sqrt().recip();
        let mf = m as f64;
        let mut z = 0.0f64;
        for i in 0..m.div_ceil(2) {
            z = match i {
                0 => (2.0 * mf + 1.0).sqrt() - 1.85575 * (2.0 * mf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * mf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 1.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=m {
                    let jf = j as f64;
                    let p3 = p2;
                    p2 = p1;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * mf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[m - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[m - 1 - i] = w[i];
        }
        Self { nodes: x, weights: w }
    }

    /// `∫ e^{-ξ²/4} f(ξ) dξ` via `ξ = 2x`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| 2.0 * w * f(2.0 * x))
            .sum()
    }
}

/// `‖h_k‖²` for the unnormalized basis `h_k(ξ) = H_k(ξ/2)`.
pub fn basis_norm_sq(k: usize) -> f64 {
    let mut v = 2.0 * SQRT_PI;
    for j in 1..=k {
        v *= 2.0 * j as f64;
    }
    v
}

/// Orthonormal basis values `ψ_0(ξ), …, ψ_kmax(ξ)`.
pub fn orthonormal_values(kmax: usize, xi: f64) -> Vec<f64> {
    let x = 0.5 * xi;
    let mut out = Vec::with_capacity(kmax + 1);
    out.push((2.0 * SQRT_PI).sqrt().recip());
    if kmax >= 1 {
        out.push(2f64.sqrt() * x * out[0]);
    }
    for k in 1..kmax {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
        out.push(next);
    }
    out
}

/// Unnormalized `h_k(ξ)` via `h_{k+1} = ξ h_k - 2k h_{k-1}`.
pub fn hermite_h(k: usize, xi: f64) -> f64 {
    let (mut a, mut b) = (1.0, xi);
    if k == 0 {
        return a;
    }
    for j in 1..k {
        let c = xi * b - 2.0 * j as f64 * a;
        a = b;
        b = c;
    }
    b
}

/// Expansion in the orthonormal basis ψ_k.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HermiteSeries {
    pub coeffs: Vec<f64>,
}

impl HermiteSeries {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, xi: f64) -> f64 {
        let psi = orthonormal_values(self.degree(), xi);
        self.coeffs.iter().zip(&psi).map(|(c, p)| c * p).sum()
    }

    /// `ψ_k' = sqrt(k/2) ψ_{k-1}`.
    pub fn derivative(&self) -> Self {
        let m = self.coeffs.len();
        let mut out = vec![0.0; m.saturating_sub(1).max(1)];
        for k in 1..m {
            out[k - 1] = (k as f64 / 2.0).sqrt() * self.coeffs[k];
        }
        Self::new(out)
    }

    /// `ξ ψ_k = sqrt(2(k+1)) ψ_{k+1} + sqrt(2k) ψ_{k-1}`.
    pub fn mul_xi(&self) -> Self {
        let m = self.coeffs.len();
        let mut out = vec![0.0; m + 1];
        for k in 0..m {
            let c = self.coeffs[k];
            out[k + 1] += (2.0 * (k as f64 + 1.0)).sqrt() * c;
            if k > 0 {
                out[k - 1] += (2.0 * k as f64).sqrt() * c;
            }
        }
        Self::new(out)
    }

    /// `∫_0^ξ f`, using `∫_0^ξ ψ_k = sqrt(2/(k+1)) (ψ_{k+1}(ξ) - ψ_{k+1}(0))`.
    pub fn antiderivative_from_zero(&self) -> Self {
        let m = self.coeffs.len();
        let mut out = vec![0.0; m + 1];
        let at0 = orthonormal_values(m, 0.0);
        for k in 0..m {
            let s = (2.0 / (k as f64 + 1.0)).sqrt() * self.coeffs[k];
            out[k + 1] += s;
            out[0] -= s * at0[k + 1] / at0[0];
        }
        Self::new(out)
    }

    pub fn add(&self, other: &Self, scale: f64) -> Self {
        let m = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![0.0; m];
        for (k, v) in out.iter_mut().enumerate() {
            *v = self.coeffs.get(k).copied().unwrap_or(0.0) + scale * other.coeffs.get(k).copied().unwrap_or(0.0);
        }
        Self::new(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn apply_l(&self) -> Self {
        Self::new(self.coeffs.iter().enumerate().map(|(k, c)| c * (1.0 - k as f64 / 2.0)).collect())
    }

    pub fn norm_h(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn norm_d(&self) -> f64 {
        self.coeffs.iter().enumerate().map(|(k, c)| c * c * (1.0 + k as f64 / 2.0)).sum::<f64>().sqrt()
    }

    pub fn norm_dstar(&self) -> f64 {
        self.coeffs.iter().enumerate().map(|(k, c)| c * c / (1.0 + k as f64 / 2.0)).sum::<f64>().sqrt()
    }
}

/// Samples on a uniform grid symmetric about 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedFunction {
    pub xi_grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl WeightedFunction {
    pub fn sample(space: &SpectralSpace, f: impl Fn(f64) -> f64) -> Self {
        let xi_grid = space.grid();
        let values = xi_grid.iter().map(|&x| f(x)).collect();
        Self { xi_grid, values }
    }

    pub fn from_samples(xi_grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xi_grid.len() != values.len() || xi_grid.len() < 5 {
            return Err(Error::Grid("grid and values must match and hold at least 5 points".into()));
        }
        Ok(Self { xi_grid, values })
    }

    pub fn spacing(&self) -> f64 {
        self.xi_grid[1] - self.xi_grid[0]
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            xi_grid: self.xi_grid.clone(),
            values: self.xi_grid.iter().zip(&self.values).map(|(&x, &v)| f(x, v)).collect(),
        }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        compatible(self, other)?;
        Ok(Self {
            xi_grid: self.xi_grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn derivative(&self) -> Self {
        Self { xi_grid: self.xi_grid.clone(), values: d1_uniform(&self.values, self.spacing()) }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn compatible(f: &WeightedFunction, g: &WeightedFunction) -> Result<()> {
    if f.xi_grid.len() != g.xi_grid.len()
        || f.xi_grid.first() != g.xi_grid.first()
        || f.xi_grid.last() != g.xi_grid.last()
    {
        return Err(Error::Grid(format!(
            "grids differ: {} points on [{}, {}] vs {} points on [{}, {}]",
            f.xi_grid.len(),
            f.xi_grid[0],
            f.xi_grid[f.xi_grid.len() - 1],
            g.xi_grid.len(),
            g.xi_grid[0],
            g.xi_grid[g.xi_grid.len() - 1]
        )));
    }
    Ok(())
}

/// Discretization of the weighted space: the ξ grid, Gauss rule and basis
/// truncation used by all spectral operations.
#[derive(Debug, Clone)]
pub struct SpectralSpace {
    pub xi_max: f64,
    pub points: usize,
    pub basis_degree: usize,
    pub gauss: GaussHermite,
}

impl Default for SpectralSpace {
    fn default() -> Self {
        Self::new(8.0, 801, 64, 60).expect("default spectral space")
    }
}

impl SpectralSpace {
    pub fn new(xi_max: f64, points: usize, basis_degree: usize, gauss_nodes: usize) -> Result<Self> {
        if !(xi_max > 0.0) {
            return Err(param("xi_max", "must be positive"));
        }
        if points < 5 || points % 2 == 0 {
            return Err(param("points", "need an odd count of at least 5 (ξ = 0 is a node)"));
        }
        if gauss_nodes < 2 {
            return Err(param("gauss_nodes", "need at least 2"));
        }
        Ok(Self { xi_max, points, basis_degree, gauss: GaussHermite::new(gauss_nodes) })
    }

    pub fn grid(&self) -> Vec<f64> {
        let h = 2.0 * self.xi_max / (self.points - 1) as f64;
        (0..self.points).map(|i| -self.xi_max + i as f64 * h).collect()
    }

    pub fn weight(xi: f64) -> f64 {
        (-0.25 * xi * xi).exp()
    }

    /// Weighted inner product of sampled functions (trapezoid on the grid).
    pub fn inner(&self, f: &WeightedFunction, g: &WeightedFunction) -> Result<f64> {
        compatible(f, g)?;
        let y: Vec<f64> = f
            .xi_grid
            .iter()
            .zip(f.values.iter().zip(&g.values))
            .map(|(&x, (&a, &b))| Self::weight(x) * a * b)
            .collect();
        Ok(trapezoid(&f.xi_grid, &y))
    }

    /// Weighted inner product of two closures by Gauss quadrature.
    pub fn inner_fn(&self, f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64) -> f64 {
        self.gauss.integrate(|x| f(x) * g(x))
    }

    /// Both quadratures for the same pair of closures.
    pub fn inner_report(&self, f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64) -> InnerReport {
        let gauss = self.inner_fn(&f, &g);
        let wf = WeightedFunction::sample(self, &f);
        let wg = WeightedFunction::sample(self, &g);
        let trap = self.inner(&wf, &wg).expect("same grid");
        InnerReport { gauss, trapezoid: trap, discrepancy: (gauss - trap).abs() }
    }

    /// `𝓛f` by second-order finite differences on the grid.
    pub fn apply_l(&self, f: &WeightedFunction) -> WeightedFunction {
        let h = f.spacing();
        let d1 = d1_uniform(&f.values, h);
        let d2 = d2_uniform(&f.values, h);
        let values = (0..f.values.len())
            .map(|i| d2[i] - 0.5 * f.xi_grid[i] * d1[i] + f.values[i])
            .collect();
        WeightedFunction { xi_grid: f.xi_grid.clone(), values }
    }

    /// Splits `f` along 1, ξ, ξ²-2 and the remainder.
    pub fn project(&self, f: &WeightedFunction, n: usize) -> ModeDecomposition {
        let one = f.map(|_, _| 1.0);
        let lin = f.map(|x, _| x);
        let quad = f.map(|x, _| x * x - 2.0);
        let c_const = self.inner(&one, f).unwrap() / basis_norm_sq(0);
        let c_lin = self.inner(&lin, f).unwrap() / basis_norm_sq(1);
        let s = (2.0 * (n as f64 - 2.0)).sqrt();
        let a = self.inner(&quad, f).unwrap() / (16.0 * (2.0 * (n as f64 - 2.0) * std::f64::consts::PI).sqrt());
        let minus_part = f.map(|x, v| v - c_const - c_lin * x - s * a * (x * x - 2.0));
        ModeDecomposition { n, c_const, c_lin, a, minus_part }
    }

    /// Coefficients against ψ_0..ψ_N by grid quadrature.
    pub fn expand(&self, f: &WeightedFunction, degree: usize) -> HermiteSeries {
        let mut acc = vec![vec![0.0; f.xi_grid.len()]; degree + 1];
        for (i, &x) in f.xi_grid.iter().enumerate() {
            let psi = orthonormal_values(degree, x);
            let w = Self::weight(x) * f.values[i];
            for k in 0..=degree {
                acc[k][i] = w * psi[k];
            }
        }
        HermiteSeries::new(acc.iter().map(|y| trapezoid(&f.xi_grid, y)).collect())
    }

    pub fn norms(&self, f: &WeightedFunction) -> Norms {
        let h = f.spacing();
        let fp = d1_uniform(&f.values, h);
        let w: Vec<f64> = f.xi_grid.iter().map(|&x| Self::weight(x)).collect();
        let hh: Vec<f64> = (0..f.values.len()).map(|i| w[i] * f.values[i] * f.values[i]).collect();
        let dd: Vec<f64> = (0..f.values.len()).map(|i| w[i] * (fp[i] * fp[i] + f.values[i] * f.values[i])).collect();
        let n_full = self.basis_degree;
        let full = self.expand(f, n_full);
        let half = HermiteSeries::new(full.coeffs[..=n_full / 2].to_vec());
        let dstar = full.norm_dstar();
        Norms {
            h: simpson_uniform(&hh, h).sqrt(),
            d: simpson_uniform(&dd, h).sqrt(),
            dstar,
            dstar_truncation: (dstar - half.norm_dstar()).abs(),
            basis_degree: n_full,
        }
    }

    /// Galerkin matrix of 𝓛 on ψ_0..ψ_kmax (derivatives from the basis
    /// recurrences, entries by Gauss quadrature) and its eigenvalues.
    pub fn operator_spectrum(&self, kmax: usize) -> SpectrumReport {
        let m = kmax + 1;
        let mut mat = DMatrix::<f64>::zeros(m, m);
        for (&x, &w) in self.gauss.nodes.iter().zip(&self.gauss.weights) {
            let xi = 2.0 * x;
            let psi = orthonormal_values(kmax, xi);
            let dpsi: Vec<f64> = (0..m).map(|k| if k == 0 { 0.0 } else { (k as f64 / 2.0).sqrt() * psi[k - 1] }).collect();
            let ddpsi: Vec<f64> = (0..m)
                .map(|k| if k < 2 { 0.0 } else { (k as f64 / 2.0).sqrt() * ((k as f64 - 1.0) / 2.0).sqrt() * psi[k - 2] })
                .collect();
            for j in 0..m {
                for k in 0..m {
                    let lk = ddpsi[k] - 0.5 * xi * dpsi[k] + psi[k];
                    mat[(j, k)] += 2.0 * w * psi[j] * lk;
                }
            }
        }
        let mut asym = 0.0f64;
        for j in 0..m {
            for k in 0..m {
                asym = asym.max((mat[(j, k)] - mat[(k, j)]).abs());
            }
        }
        let sym = (&mat + mat.transpose()) * 0.5;
        let mut eig: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let max_error = eig.iter().enumerate().map(|(k, &e)| (e - (1.0 - k as f64 / 2.0)).abs()).fold(0.0, f64::max);
        SpectrumReport { eigenvalues: eig, max_error, asymmetry: asym }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct InnerReport {
    pub gauss: f64,
    pub trapezoid: f64,
    pub discrepancy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    /// Sorted in decreasing order.
    pub eigenvalues: Vec<f64>,
    pub max_error: f64,
    pub asymmetry: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Norms {
    pub h: f64,
    pub d: f64,
    pub dstar: f64,
    /// |‖f‖_𝓓* at degree N minus the same at N/2|.
    pub dstar_truncation: f64,
    pub basis_degree: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeDecomposition {
    pub n: usize,
    pub c_const: f64,
    pub c_lin: f64,
    /// Neutral coefficient: `⟨ξ²-2, f⟩ / (16 sqrt(2(n-2)π))`.
    pub a: f64,
    pub minus_part: WeightedFunction,
}

impl ModeDecomposition {
    pub fn plus_part(&self) -> WeightedFunction {
        self.minus_part.map(|x, _| self.c_const + self.c_lin * x)
    }

    pub fn neutral_part(&self) -> WeightedFunction {
        let s = (2.0 * (self.n as f64 - 2.0)).sqrt();
        self.minus_part.map(|x, _| s * self.a * (x * x - 2.0))
    }

    /// `P_+ f + P_- f`.
    pub fn hat(&self) -> WeightedFunction {
        self.minus_part.map(|x, v| v + self.c_const + self.c_lin * x)
    }

    pub fn reconstruct(&self) -> WeightedFunction {
        let s = (2.0 * (self.n as f64 - 2.0)).sqrt();
        self.minus_part.map(|x, v| v + self.c_const + self.c_lin * x + s * self.a * (x * x - 2.0))
    }
}

/// `sup_τ (∫_{τ-1}^τ v)^{1/2}` over a uniformly sampled series of squared
/// norms `v`.
pub fn windowed_sup(taus: &[f64], sq: &[f64]) -> Result<f64> {
    if taus.len() < 2 || taus[taus.len() - 1] - taus[0] < 1.0 - 1e-12 {
        return Err(param("tau window", "series must span at least one unit of τ"));
    }
    let dt = taus[1] - taus[0];
    let span = (1.0 / dt).round() as usize;
    let mut best = 0.0f64;
    for end in span..taus.len() {
        let v = trapezoid(&taus[end - span..=end], &sq[end - span..=end]);
        best = best.max(v);
    }
    Ok(best.sqrt())
}

/// Ratios of the maps in the boundedness proposition on random band-limited
/// functions.
#[derive(Debug, Clone, Serialize)]
pub struct BoundednessReport {
    pub samples: usize,
    pub degree: usize,
    /// max over f and both half-lines of `∫ e^{-ξ²/4} g² / (2 ∫ e^{-ξ²/4} f²)`, g = ∫_0^ξ f.
    pub halfline_ratio_max: f64,
    pub halfline_violations: usize,
    /// 𝓓 → 𝓗: ξf, f', -f'+ξf/2.
    pub d_to_h: [f64; 3],
    /// 𝓗 → 𝓓*: ξf, f', -f'+ξf/2.
    pub h_to_dstar: [f64; 3],
    /// 𝓓 → 𝓓*: ξ²f, ξf', f''.
    pub d_to_dstar: [f64; 3],
    /// 𝓗 → 𝓓: ∫_0^ξ f.
    pub antiderivative_h_to_d: f64,
}

pub fn random_series(rng: &mut impl Rng, degree: usize) -> HermiteSeries {
    HermiteSeries::new((0..=degree).map(|k| rng.gen_range(-1.0..1.0) / (1.0 + k as f64)).collect())
}

fn halfline_sq(s: &HermiteSeries, positive: bool) -> f64 {
    let (len, steps) = (40.0, 8000usize);
    let h = len / steps as f64;
    let y: Vec<f64> = (0..=steps)
        .map(|i| {
            let xi = if positive { i as f64 * h } else { -(i as f64) * h };
            let v = s.eval(xi);
            SpectralSpace::weight(xi) * v * v
        })
        .collect();
    simpson_uniform(&y, h)
}

pub fn operator_boundedness_suite(seed: u64, samples: usize, degree: usize) -> BoundednessReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = BoundednessReport {
        samples,
        degree,
        halfline_ratio_max: 0.0,
        halfline_violations: 0,
        d_to_h: [0.0; 3],
        h_to_dstar: [0.0; 3],
        d_to_dstar: [0.0; 3],
        antiderivative_h_to_d: 0.0,
    };
    for _ in 0..samples {
        let f = random_series(&mut rng, degree);
        let g = f.antiderivative_from_zero();
        for positive in [true, false] {
            let r = halfline_sq(&g, positive) / (2.0 * halfline_sq(&f, positive));
            rep.halfline_ratio_max = rep.halfline_ratio_max.max(r);
            if r > 1.0 + 1e-9 {
                rep.halfline_violations += 1;
            }
        }
        let xf = f.mul_xi();
        let fp = f.derivative();
        let mixed = fp.scale(-1.0).add(&xf, 0.5);
        let (nh, nd) = (f.norm_h(), f.norm_d());
        for (slot, img) in [&xf, &fp, &mixed].iter().enumerate() {
            rep.d_to_h[slot] = rep.d_to_h[slot].max(img.norm_h() / nd);
            rep.h_to_dstar[slot] = rep.h_to_dstar[slot].max(img.norm_dstar() / nh);
        }
        let x2f = xf.mul_xi();
        let xfp = fp.mul_xi();
        let fpp = fp.derivative();
        for (slot, img) in [&x2f, &xfp, &fpp].iter().enumerate() {
            rep.d_to_dstar[slot] = rep.d_to_dstar[slot].max(img.norm_dstar() / nd);
        }
        rep.antiderivative_h_to_d = rep.antiderivative_h_to_d.max(g.norm_d() / nh);
    }
    rep
}

/// One manufactured forcing: `g_k(τ) = amp cos(ω τ + φ)` in mode k, plus an
/// optional homogeneous growing component in the P_+ modes fixed at τ_*.
#[derive(Debug, Clone, Serialize)]
pub struct ForcingCase {
    pub modes: Vec<(usize, f64, f64, f64)>,
    pub plus_at_star: [f64; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyCaseReport {
    pub sup_hat_h: f64,
    pub hat_d_window: f64,
    pub plus_at_star: f64,
    pub g_dstar_window: f64,
    /// Smallest Λ with `A + B/Λ <= P + Λ G`; `None` when no finite Λ works.
    pub lambda_min: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyEstimateReport {
    pub tau_star: f64,
    pub window: f64,
    pub dtau: f64,
    pub degree: usize,
    pub cases: Vec<EnergyCaseReport>,
    pub lambda_max: f64,
}

/// Solves `∂_τ f = 𝓛f + g` mode by mode on `[τ_* - window, τ_*]` and fits
/// the smallest Λ in the linear energy estimate for each case.
///
/// Stable modes start from rest far in the past (a burn-in of 40 units);
/// unstable modes are integrated backward from their value at τ_*, which
/// selects the solution that stays bounded as τ → -∞.
pub fn linear_energy_estimate_check(
    cases: &[ForcingCase],
    tau_star: f64,
    window: f64,
    dtau: f64,
    degree: usize,
) -> Result<EnergyEstimateReport> {
    if window < 1.0 {
        return Err(param("window", "must be at least one unit of τ"));
    }
    let steps = (window / dtau).round() as usize;
    let dtau = window / steps as f64;
    let tau0 = tau_star - window;
    let taus: Vec<f64> = (0..=steps).map(|i| tau0 + i as f64 * dtau).collect();
    let mut out = Vec::new();
    let mut lambda_max = 0.0f64;
    for case in cases {
        let coeffs = solve_modes(case, &taus, degree, dtau);
        let forcing = |k: usize, t: f64| -> f64 {
            case.modes.iter().filter(|m| m.0 == k).map(|&(_, a, w, p)| a * (w * t + p).cos()).sum()
        };
        let mut hat_h = Vec::with_capacity(taus.len());
        let mut hat_d = Vec::with_capacity(taus.len());
        let mut g_ds = Vec::with_capacity(taus.len());
        for (i, &t) in taus.iter().enumerate() {
            let mut sh = 0.0;
            let mut sd = 0.0;
            let mut sg = 0.0;
            for k in 0..=degree {
                let w = 1.0 + k as f64 / 2.0;
                sg += forcing(k, t).powi(2) / w;
                if k == 2 {
                    continue;
                }
                let c = coeffs[k][i];
                sh += c * c;
                sd += c * c * w;
            }
            hat_h.push(sh.sqrt());
            hat_d.push(sd);
            g_ds.push(sg);
        }
        let a = hat_h.iter().cloned().fold(0.0, f64::max);
        let b = windowed_sup(&taus, &hat_d)?;
        let g = windowed_sup(&taus, &g_ds)?;
        let p = (coeffs[0][steps].powi(2) + coeffs[1][steps].powi(2)).sqrt();
        let lambda = fit_lambda(a, b, p, g);
        if let Some(l) = lambda {
            lambda_max = lambda_max.max(l);
        } else {
            lambda_max = f64::INFINITY;
        }
        out.push(EnergyCaseReport { sup_hat_h: a, hat_d_window: b, plus_at_star: p, g_dstar_window: g, lambda_min: lambda });
    }
    Ok(EnergyEstimateReport { tau_star, window, dtau, degree, cases: out, lambda_max })
}

/// Smallest Λ > 0 with `a + b/Λ <= p + Λ g`.
pub fn fit_lambda(a: f64, b: f64, p: f64, g: f64) -> Option<f64> {
    if g > 0.0 {
        let d = a - p;
        Some((d + (d * d + 4.0 * g * b).sqrt()) / (2.0 * g))
    } else if b == 0.0 && a <= p {
        Some(0.0)
    } else {
        None
    }
}

fn solve_modes(case: &ForcingCase, taus: &[f64], degree: usize, dtau: f64) -> Vec<Vec<f64>> {
    let forcing = |k: usize, t: f64| -> f64 {
        case.modes.iter().filter(|m| m.0 == k).map(|&(_, a, w, p)| a * (w * t + p).cos()).sum()
    };
    let rk4 = |k: usize, c: f64, t: f64, h: f64| -> f64 {
        let lam = 1.0 - k as f64 / 2.0;
        let f = |tt: f64, cc: f64| lam * cc + forcing(k, tt);
        let k1 = f(t, c);
        let k2 = f(t + 0.5 * h, c + 0.5 * h * k1);
        let k3 = f(t + 0.5 * h, c + 0.5 * h * k2);
        let k4 = f(t + h, c + h * k3);
        c + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };
    let m = taus.len();
    let mut out = vec![vec![0.0; m]; degree + 1];
    for (k, row) in out.iter_mut().enumerate() {
        if k <= 1 {
            // Bounded-past solution: the particular solution that stays
            // bounded, plus the homogeneous part fixed at τ_*. Backward
            // integration of a growing mode is stable.
            let lam = 1.0 - k as f64 / 2.0;
            let mut c = case.plus_at_star[k]
                + case
                    .modes
                    .iter()
                    .filter(|md| md.0 == k)
                    .map(|&(_, a, w, p)| bounded_particular(lam, a, w, p, taus[m - 1]))
                    .sum::<f64>();
            row[m - 1] = c;
            for i in (0..m - 1).rev() {
                c = rk4(k, c, taus[i + 1], -dtau);
                row[i] = c;
            }
        } else {
            let burn = 40.0;
            let burn_steps = (burn / dtau).round() as usize;
            let mut t = taus[0] - burn_steps as f64 * dtau;
            let mut c = 0.0;
            for _ in 0..burn_steps {
                c = rk4(k, c, t, dtau);
                t += dtau;
            }
            row[0] = c;
            for i in 1..m {
                c = rk4(k, c, taus[i - 1], dtau);
                row[i] = c;
            }
        }
    }
    out
}

/// Bounded solution of `c' = λc + a cos(ωτ + φ)` on the whole line, λ ≠ 0.
pub fn bounded_particular(lam: f64, a: f64, w: f64, p: f64, t: f64) -> f64 {
    // c = Re[a e^{i(ωτ+φ)} / (iω - λ)]
    let den = w * w + lam * lam;
    let th = w * t + p;
    a * (-lam * th.cos() + w * th.sin()) / den
}

/// Deterministic suite of manufactured forcings.
pub fn manufactured_forcings(seed: u64, count: usize, degree: usize) -> Vec<ForcingCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let nmodes = 1 + (i % 4);
            let modes = (0..nmodes)
                .map(|_| {
                    let mut k = rng.gen_range(0..=degree.min(12));
                    if k == 2 {
                        k = 3;
                    }
                    (k, rng.gen_range(0.2..1.5), rng.gen_range(0.3..3.0), rng.gen_range(0.0..6.28))
                })
                .collect();
            let plus = if i % 2 == 0 { [0.0, 0.0] } else { [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)] };
            ForcingCase { modes, plus_at_star: plus }
        })
        .collect()
}
