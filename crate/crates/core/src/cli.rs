//! Scenario runner: key-value configs in, comma-separated tables, JSON
//! summaries and a pass/fail manifest out.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::bryant::{asymptotic_summary, curvatures, solve_bryant, to_arclength, BryantProfile};
use crate::compare::{
    error_terms, kill_modes, neutral_ode_monitor, neutral_series, overlap_monitor, record_snapshots, solve_shift, tau_grid, KillOptions,
    PairContext, ReparamTriplet, SnapshotFlow,
};
use crate::flow::{calibrate_extinction, curvature_and_pic, make_oval_initial_data, OvalParams, ProfileState};
use crate::rescale::{native_cylindrical, neutral_limit_check};
use crate::spectral::{operator_boundedness_suite, SpectralSpace};
use crate::tip::{compute_tip_profile, mu_second_derivative_check, poincare_check, random_test_functions, tip_monitors, tip_table, weight_mu, Side};
use crate::{Error, Result};

/// Overrides `output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "OVALFLOW_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Bryant,
    Evolve,
    Rescale,
    Tip,
    Compare,
    CheckAll,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [Self::Bryant, Self::Evolve, Self::Rescale, Self::Tip, Self::Compare, Self::CheckAll];

    pub fn name(self) -> &'static str {
        match self {
            Self::Bryant => "bryant",
            Self::Evolve => "evolve",
            Self::Rescale => "rescale",
            Self::Tip => "tip",
            Self::Compare => "compare",
            Self::CheckAll => "check-all",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| format!("unknown command `{s}`"))
    }
}

/// Every setting of a run. Times are given through `log(-t)` or `τ = -log(-t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Scenario,
    pub dimension_n: usize,
    pub bryant_r_max_length: f64,
    pub bryant_tolerance: f64,
    pub t0_log_magnitude: f64,
    pub grid_points: usize,
    pub step_safety: f64,
    pub tau_start_log_time: f64,
    pub tau_end_log_time: f64,
    pub tau_step_log_time: f64,
    pub snapshot_step_log_time: f64,
    pub neutral_window_xi: f64,
    pub tip_points: usize,
    pub theta_tip: f64,
    pub poincare_samples: usize,
    pub spectral_xi_max: f64,
    pub spectral_points: usize,
    pub spectral_basis_degree: usize,
    pub spectral_gauss_nodes: usize,
    pub theta: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub tau_star_log_time: f64,
    pub monitor_window_log_time: f64,
    pub second_t0_log_magnitude: f64,
    pub second_glue_radius_fraction: f64,
    pub seed: u64,
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Scenario::CheckAll,
            dimension_n: 4,
            bryant_r_max_length: 200.0,
            bryant_tolerance: 1e-10,
            t0_log_magnitude: 14.0,
            grid_points: 401,
            step_safety: 0.9,
            tau_start_log_time: -13.5,
            tau_end_log_time: -11.7,
            tau_step_log_time: 0.5,
            snapshot_step_log_time: 0.05,
            neutral_window_xi: 2.0,
            tip_points: 160,
            theta_tip: 0.25,
            poincare_samples: 100,
            spectral_xi_max: 8.0,
            spectral_points: 801,
            spectral_basis_degree: 64,
            spectral_gauss_nodes: 60,
            theta: 1.5,
            epsilon: 0.05,
            delta: 0.05,
            tau_star_log_time: -12.0,
            monitor_window_log_time: 1.0,
            second_t0_log_magnitude: 14.5,
            second_glue_radius_fraction: 0.4,
            seed: 42,
            output_dir: "ovalflow-out".into(),
        }
    }
}

/// Config keys with a one-line description each; flags use the same names.
pub const KEYS: &[(&str, &str)] = &[
    ("command", "bryant | evolve | rescale | tip | compare | check-all"),
    ("dimension_n", "manifold dimension, at least 4"),
    ("bryant_r_max_length", "outer radius of the soliton table"),
    ("bryant_tolerance", "ODE tolerance for the soliton"),
    ("t0_log_magnitude", "initial oval at t0 = -exp(value), before calibration"),
    ("grid_points", "profile grid nodes"),
    ("step_safety", "fraction of the stable time step"),
    ("tau_start_log_time", "first recorded tau"),
    ("tau_end_log_time", "last recorded tau"),
    ("tau_step_log_time", "tau spacing of rescaled snapshots"),
    ("snapshot_step_log_time", "tau spacing of flow snapshots for comparisons"),
    ("neutral_window_xi", "half-width of the neutral-mode window in xi"),
    ("tip_points", "nodes of each tip profile"),
    ("theta_tip", "tip-region parameter for the weight and omega_T"),
    ("poincare_samples", "random test functions for the weighted Poincare check"),
    ("spectral_xi_max", "half-width of the weighted xi grid"),
    ("spectral_points", "weighted grid nodes (odd)"),
    ("spectral_basis_degree", "Hermite truncation"),
    ("spectral_gauss_nodes", "Gauss-Hermite nodes"),
    ("theta", "cylindrical cutoff parameter"),
    ("epsilon", "admissibility budget"),
    ("delta", "admissibility required of the mode-killing triplet"),
    ("tau_star_log_time", "reference time tau_* of the comparison"),
    ("monitor_window_log_time", "length of the neutral-mode monitor window ending at tau_*"),
    ("second_t0_log_magnitude", "second oval of the pair starts at -exp(value)"),
    ("second_glue_radius_fraction", "gluing radius fraction of the second oval"),
    ("seed", "seed for random test suites"),
    ("output_dir", "directory for all outputs"),
];

fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}`"))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "command" => self.command = v.parse()?,
            "dimension_n" => self.dimension_n = num(v)?,
            "bryant_r_max_length" => self.bryant_r_max_length = num(v)?,
            "bryant_tolerance" => self.bryant_tolerance = num(v)?,
            "t0_log_magnitude" => self.t0_log_magnitude = num(v)?,
            "grid_points" => self.grid_points = num(v)?,
            "step_safety" => self.step_safety = num(v)?,
            "tau_start_log_time" => self.tau_start_log_time = num(v)?,
            "tau_end_log_time" => self.tau_end_log_time = num(v)?,
            "tau_step_log_time" => self.tau_step_log_time = num(v)?,
            "snapshot_step_log_time" => self.snapshot_step_log_time = num(v)?,
            "neutral_window_xi" => self.neutral_window_xi = num(v)?,
            "tip_points" => self.tip_points = num(v)?,
            "theta_tip" => self.theta_tip = num(v)?,
            "poincare_samples" => self.poincare_samples = num(v)?,
            "spectral_xi_max" => self.spectral_xi_max = num(v)?,
            "spectral_points" => self.spectral_points = num(v)?,
            "spectral_basis_degree" => self.spectral_basis_degree = num(v)?,
            "spectral_gauss_nodes" => self.spectral_gauss_nodes = num(v)?,
            "theta" => self.theta = num(v)?,
            "epsilon" => self.epsilon = num(v)?,
            "delta" => self.delta = num(v)?,
            "tau_star_log_time" => self.tau_star_log_time = num(v)?,
            "monitor_window_log_time" => self.monitor_window_log_time = num(v)?,
            "second_t0_log_magnitude" => self.second_t0_log_magnitude = num(v)?,
            "second_glue_radius_fraction" => self.second_glue_radius_fraction = num(v)?,
            "seed" => self.seed = num(v)?,
            "output_dir" => self.output_dir = v.to_string(),
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Range checks; `origin` maps keys to the line that set them.
    pub fn validate(&self, origin: &HashMap<String, usize>) -> Result<()> {
        let fail = |field: &str, msg: &str| Error::Config { line: origin.get(field).copied().unwrap_or(0), field: field.into(), msg: msg.into() };
        let finite = |x: f64| x.is_finite();
        if self.dimension_n < 4 {
            return Err(fail("dimension_n", "need n >= 4"));
        }
        if self.grid_points < 64 {
            return Err(fail("grid_points", "need at least 64"));
        }
        if !(self.step_safety > 0.0 && self.step_safety <= 1.0) {
            return Err(fail("step_safety", "must lie in (0, 1]"));
        }
        if !(finite(self.t0_log_magnitude) && self.t0_log_magnitude >= 4.0) {
            return Err(fail("t0_log_magnitude", "need at least 4"));
        }
        if !(self.tau_start_log_time < self.tau_end_log_time && self.tau_end_log_time < 0.0) {
            return Err(fail("tau_end_log_time", "need tau_start < tau_end < 0"));
        }
        if self.tau_start_log_time <= -self.t0_log_magnitude {
            return Err(fail("tau_start_log_time", "must come after the initial time"));
        }
        for (k, v) in [("tau_step_log_time", self.tau_step_log_time), ("snapshot_step_log_time", self.snapshot_step_log_time)] {
            if !(v > 0.0) {
                return Err(fail(k, "must be positive"));
            }
        }
        if self.snapshot_step_log_time > 0.1 {
            return Err(fail("snapshot_step_log_time", "the neutral-mode monitor needs a spacing of at most 0.1"));
        }
        for (k, v) in [("theta", self.theta), ("theta_tip", self.theta_tip), ("epsilon", self.epsilon), ("delta", self.delta)] {
            if !(v > 0.0) {
                return Err(fail(k, "must be positive"));
            }
        }
        if !(self.bryant_r_max_length > 1.0) {
            return Err(fail("bryant_r_max_length", "must exceed 1"));
        }
        if !(self.bryant_tolerance > 0.0) {
            return Err(fail("bryant_tolerance", "must be positive"));
        }
        if self.tip_points < 4 {
            return Err(fail("tip_points", "need at least 4"));
        }
        if self.spectral_points < 5 || self.spectral_points % 2 == 0 {
            return Err(fail("spectral_points", "need an odd count of at least 5"));
        }
        if !(self.tau_star_log_time > self.tau_start_log_time && self.tau_star_log_time < self.tau_end_log_time) {
            return Err(fail("tau_star_log_time", "must lie inside the recorded tau range"));
        }
        if !(self.monitor_window_log_time >= 1.0) {
            return Err(fail("monitor_window_log_time", "need at least 1"));
        }
        if !(self.second_glue_radius_fraction > 0.0 && self.second_glue_radius_fraction < 1.0) {
            return Err(fail("second_glue_radius_fraction", "must lie in (0, 1)"));
        }
        if self.output_dir.is_empty() {
            return Err(fail("output_dir", "must not be empty"));
        }
        Ok(())
    }
}

/// Parses `key = value` lines onto `base`; `#` starts a comment.
/// Returns the line that set each key.
pub fn parse_config(text: &str, base: &mut RunConfig) -> Result<HashMap<String, usize>> {
    let mut origin = HashMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| Error::Config { line, field: body.into(), msg: "expected `key = value`".into() })?;
        let (key, value) = (key.trim(), value.trim());
        if let Some(prev) = origin.get(key) {
            return Err(Error::Config { line, field: key.into(), msg: format!("already set on line {prev}") });
        }
        base.set(key, value).map_err(|msg| Error::Config { line, field: key.into(), msg })?;
        origin.insert(key.to_string(), line);
    }
    Ok(origin)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: Scenario,
    pub config: RunConfig,
    pub suites: Vec<String>,
    pub checks: Vec<Check>,
    pub files: Vec<String>,
    pub pass: bool,
}

struct Out {
    root: PathBuf,
    prefix: String,
    files: Vec<String>,
    checks: Vec<Check>,
    suites: Vec<String>,
}

impl Out {
    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let rel = format!("{}{}", self.prefix, name);
        let path = self.root.join(&rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, body)?;
        self.files.push(rel);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        let body = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
        self.write(name, &(body + "\n"))
    }

    fn suite(&mut self, name: &str) {
        self.suites.push(name.into());
    }

    /// Records `value <= bound`.
    fn le(&mut self, name: &str, value: f64, bound: f64) {
        let suite = self.suites.last().cloned().unwrap_or_default();
        self.checks.push(Check { suite, name: name.into(), value, bound, pass: value <= bound });
    }
}

fn table(header: &str, cols: &[&[f64]]) -> String {
    let mut s = String::from(header);
    s.push('\n');
    let rows = cols.iter().map(|c| c.len()).min().unwrap_or(0);
    for i in 0..rows {
        let row: Vec<String> = cols.iter().map(|c| format!("{:.16e}", c[i])).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

fn t_of(tau: f64) -> f64 {
    -(-tau).exp()
}

fn oval(cfg: &RunConfig, log_t0: f64, glue: f64) -> Result<ProfileState> {
    let p = OvalParams { points: cfg.grid_points, glue_radius_fraction: glue, ..Default::default() };
    let (s, _) = make_oval_initial_data(cfg.dimension_n, -log_t0.exp(), &p)?;
    calibrate_extinction(&s, 1e-3)
}

fn first_oval(cfg: &RunConfig) -> Result<ProfileState> {
    oval(cfg, cfg.t0_log_magnitude, OvalParams::default().glue_radius_fraction)
}

fn bryant(cfg: &RunConfig) -> Result<BryantProfile> {
    solve_bryant(cfg.dimension_n, cfg.bryant_r_max_length, cfg.bryant_tolerance)
}

fn run_bryant(cfg: &RunConfig, out: &mut Out) -> Result<()> {
    out.suite("bryant");
    let n = cfg.dimension_n as f64;
    let p = bryant(cfg)?;
    let s = asymptotic_summary(&p, 50.0);
    let arc = to_arclength(&p, 520.0)?;
    let (b, db) = arc.eval(500.0);
    let k_tip = 1.0 / (n * (n - 1.0));
    out.le("r2_phi_at_50_relative_error", (s.r2_phi_large / s.r2_phi_limit_expected - 1.0).abs(), 0.01);
    out.le("b_db_at_500_relative_error", (b * db / (n - 2.0) - 1.0).abs(), 0.01);
    out.le("tip_k_orb_error", (s.k_orb_tip - k_tip).abs(), 1e-6);
    out.le("tip_k_rad_error", (s.k_rad_tip - k_tip).abs(), 1e-6);
    let c = curvatures(&p);
    let col = |f: fn(&crate::bryant::Curvature) -> f64| c.iter().map(f).collect::<Vec<_>>();
    out.write("bryant.csv", &table("r,phi,dphi,k_orb,k_rad,scalar", &[&p.r_grid, &p.phi, &p.dphi, &col(|c| c.k_orb), &col(|c| c.k_rad), &col(|c| c.scalar)]))?;
    #[derive(Serialize)]
    struct Summary {
        asymptotics: crate::bryant::AsymptoticSummary,
        b_at_500: f64,
        db_at_500: f64,
        b_db_at_500: f64,
        tip_curvature_expected: f64,
    }
    out.json("bryant_summary.json", &Summary { asymptotics: s, b_at_500: b, db_at_500: db, b_db_at_500: b * db, tip_curvature_expected: k_tip })
}

fn run_evolve(cfg: &RunConfig, out: &mut Out) -> Result<()> {
    out.suite("evolve");
    let s0 = first_oval(cfg)?;
    let s = s0.evolve_to(t_of(cfg.tau_end_log_time), cfg.step_safety)?;
    let (field, pic) = curvature_and_pic(&s);
    let interior_min = s.f[1..s.len() - 1].iter().cloned().fold(f64::INFINITY, f64::min);
    out.le("profile_positive", -interior_min, 0.0);
    out.le("scalar_curvature_positive", -pic.r_min, 0.0);
    out.le("uniform_pic_positive", -pic.uniform_pic, 0.0);
    out.write("profile.csv", &table("z,F,F_z,F_zz", &[&s.z_grid, &s.f, &s.fz(), &s.fzz()]))?;
    out.write("curvature.csv", &table("z,k_rad,k_orb,R,lambda1", &[&field.z, &field.k_rad, &field.k_orb, &field.r, &field.lambda1]))?;
    #[derive(Serialize)]
    struct Summary {
        t_start: f64,
        t_end: f64,
        z_tip_minus: f64,
        z_tip_plus: f64,
        pic: crate::flow::PicReport,
    }
    out.json("evolve_summary.json", &Summary { t_start: s0.t, t_end: s.t, z_tip_minus: s.z_tip_minus, z_tip_plus: s.z_tip_plus, pic })
}

fn rescale_taus(cfg: &RunConfig) -> Vec<f64> {
    let k = ((cfg.tau_end_log_time - cfg.tau_start_log_time) / cfg.tau_step_log_time + 1e-9).floor() as usize;
    (0..=k).map(|i| cfg.tau_start_log_time + i as f64 * cfg.tau_step_log_time).collect()
}

fn run_rescale(cfg: &RunConfig, out: &mut Out) -> Result<()> {
    out.suite("rescale");
    let mut s = first_oval(cfg)?;
    let mut hist = vec![];
    for (k, tau) in rescale_taus(cfg).into_iter().enumerate() {
        s = s.evolve_to(t_of(tau), cfg.step_safety)?;
        let cyl = native_cylindrical(&s)?;
        out.write(&format!("g_{k:03}.csv"), &cyl.to_csv()?)?;
        hist.push(cyl);
    }
    let r = neutral_limit_check(&hist, cfg.neutral_window_xi, 0.05)?;
    out.le("neutral_deviation_monotone", if r.monotone { 0.0 } else { 1.0 }, 0.0);
    let taus: Vec<f64> = r.snapshots.iter().map(|s| s.tau).collect();
    let dev: Vec<f64> = r.snapshots.iter().map(|s| s.deviation).collect();
    let lit: Vec<f64> = r.snapshots.iter().map(|s| s.deviation_literal).collect();
    out.write("neutral.csv", &table("tau,deviation,deviation_literal", &[&taus, &dev, &lit]))?;
    out.json("rescale_summary.json", &r)
}

fn run_tip(cfg: &RunConfig, out: &mut Out) -> Result<()> {
    out.suite("tip");
    let s = first_oval(cfg)?.evolve_to(t_of(cfg.tau_end_log_time), cfg.step_safety)?;
    let bry = bryant(cfg)?;
    let tip = compute_tip_profile(&s, Side::Plus, cfg.tip_points, 1e-3)?;
    let w = weight_mu(&tip, cfg.theta_tip, &bry)?;
    let p = poincare_check(&w, &random_test_functions(cfg.seed, cfg.poincare_samples, cfg.theta_tip));
    out.le("poincare_violations", p.violations as f64, 0.0);
    let sd = mu_second_derivative_check(&w);
    let th = cfg.theta_tip;
    let m = tip_monitors(&tip, th, &bry, (th / 100.0, 100.0 * th));
    out.write("tip.csv", &tip_table(&tip, Some(&w)))?;
    #[derive(Serialize)]
    struct Summary {
        tau: f64,
        rho_max: f64,
        poincare_k_star: f64,
        poincare_min_ratio: f64,
        mu_second_derivative: crate::tip::SecondDerivativeReport,
        monitors: crate::tip::TipMonitor,
    }
    out.json(
        "tip_summary.json",
        &Summary { tau: tip.tau, rho_max: tip.rho_max, poincare_k_star: p.k_star, poincare_min_ratio: p.min_ratio, mu_second_derivative: sd, monitors: m },
    )
}

fn run_spectral(cfg: &RunConfig, out: &mut Out) -> Result<()> {
    out.suite("spectral");
    let space = spectral_space(cfg)?;
    let sp = space.operator_spectrum(10);
    out.le("eigenvalue_error", sp.max_error, 1e-8);
    let b = operator_boundedness_suite(cfg.seed, 20, 12);
    out.le("halfline_violations", b.halfline_violations as f64, 0.0);
    let k: Vec<f64> = (0..sp.eigenvalues.len()).map(|k| k as f64).collect();
    out.write("spectrum.csv", &table("k,eigenvalue", &[&k, &sp.eigenvalues]))?;
    #[derive(Serialize)]
    struct Summary {
        spectrum: crate::spectral::SpectrumReport,
        boundedness: crate::spectral::BoundednessReport,
    }
    out.json("spectral_summary.json", &Summary { spectrum: sp, boundedness: b })
}

fn spectral_space(cfg: &RunConfig) -> Result<SpectralSpace> {
    SpectralSpace::new(cfg.spectral_xi_max, cfg.spectral_points, cfg.spectral_basis_degree, cfg.spectral_gauss_nodes)
}

fn snapshot_flow(cfg: &RunConfig, start: &ProfileState) -> Result<SnapshotFlow> {
    let k = ((cfg.tau_end_log_time - cfg.tau_start_log_time) / cfg.snapshot_step_log_time).round() as usize;
    let snaps = record_snapshots(start, &tau_grid(cfg.tau_start_log_time, cfg.tau_end_log_time, k + 1), cfg.step_safety)?;
    SnapshotFlow::new(&snaps, cfg.tip_points)
}

fn run_compare(cfg: &RunConfig, out: &mut Out) -> Result<()> {
    out.suite("compare");
    let flow1 = snapshot_flow(cfg, &first_oval(cfg)?)?;
    let flow2 = snapshot_flow(cfg, &oval(cfg, cfg.second_t0_log_magnitude, cfg.second_glue_radius_fraction)?)?;
    let tau_star = cfg.tau_star_log_time;
    let id = ReparamTriplet::identity(cfg.epsilon, t_of(tau_star))?;
    let ctx = PairContext::new(&flow1, &flow2, id, cfg.theta, spectral_space(cfg)?)?.with_tip_theta(cfg.theta_tip);
    let k = kill_modes(&ctx, cfg.delta, &KillOptions::default())?;
    out.le("killed_neutral_coefficient", k.a_star.abs(), 1e-8 * k.hc_norm + 1e-14);
    out.le("delta_admissible", if k.delta_admissible { 0.0 } else { 1.0 }, 0.0);
    let steps = (cfg.monitor_window_log_time / cfg.snapshot_step_log_time).round() as usize;
    let taus = tau_grid(tau_star - cfg.monitor_window_log_time, tau_star, steps + 1);
    let times: Vec<f64> = taus.iter().map(|&t| t_of(t)).collect();
    let shift = solve_shift(&k.triplet, &flow2, &times)?;
    out.le("shift_budget_ratio", shift.max_budget_ratio, 1.0);
    let kc = ctx.with_triplet(k.triplet);
    let series = neutral_series(&kc, &shift, &taus)?;
    let ode = neutral_ode_monitor(&taus, &series.a)?;
    out.le("neutral_ode_consistent", if ode.consistent { 0.0 } else { 1.0 }, 0.0);
    let ov = overlap_monitor(&series, tau_star)?;
    let et = error_terms(&kc, Some(&shift), tau_star)?;
    out.write(
        "series.csv",
        &table(
            "tau,a,Q,a_integrated,deviation,q_budget,hc_norm,hat_energy",
            &[&series.taus, &series.a, &ode.q, &ode.a_integrated, &ode.deviation, &ode.q_budget, &series.hc_norm, &series.hat_energy],
        ),
    )?;
    out.write("shift.csv", &table("t,s,ds", &[&shift.t_grid, &shift.s, &shift.ds]))?;
    out.write("error_terms.csv", &table("xi,H,H_C,residual,residual_C", &[&et.xi, &et.h, &et.hc, &et.residual, &et.residual_c]))?;
    #[derive(Serialize)]
    struct Summary {
        kill: crate::compare::KillReport,
        shift_max_budget_ratio: f64,
        neutral_consistent: bool,
        fitted_delta: f64,
        overlap: crate::compare::OverlapReport,
        error_term_residual: f64,
        error_term_residual_c: f64,
    }
    out.json(
        "compare_summary.json",
        &Summary {
            kill: k,
            shift_max_budget_ratio: shift.max_budget_ratio,
            neutral_consistent: ode.consistent,
            fitted_delta: ode.fitted_delta,
            overlap: ov,
            error_term_residual: et.max_residual,
            error_term_residual_c: et.max_residual_c,
        },
    )
}

/// Resolves the output directory, honouring [`OUTPUT_DIR_ENV`].
pub fn output_dir(cfg: &RunConfig) -> PathBuf {
    match std::env::var(OUTPUT_DIR_ENV) {
        Ok(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(&cfg.output_dir),
    }
}

/// Runs the configured scenario into `dir` and writes `manifest.json`.
pub fn run_in(cfg: &RunConfig, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut out = Out { root: dir.to_path_buf(), prefix: String::new(), files: vec![], checks: vec![], suites: vec![] };
    let single = |c: Scenario, out: &mut Out| match c {
        Scenario::Bryant => run_bryant(cfg, out),
        Scenario::Evolve => run_evolve(cfg, out),
        Scenario::Rescale => run_rescale(cfg, out),
        Scenario::Tip => run_tip(cfg, out),
        Scenario::Compare => run_compare(cfg, out),
        Scenario::CheckAll => unreachable!(),
    };
    if cfg.command == Scenario::CheckAll {
        for c in &Scenario::ALL[..5] {
            out.prefix = format!("{}/", c.name());
            single(*c, &mut out)?;
        }
        out.prefix = "spectral/".into();
        run_spectral(cfg, &mut out)?;
        out.prefix.clear();
    } else {
        single(cfg.command, &mut out)?;
    }
    let m = Manifest {
        command: cfg.command,
        config: cfg.clone(),
        suites: out.suites.clone(),
        pass: out.checks.iter().all(|c| c.pass),
        checks: out.checks.clone(),
        files: out.files.clone(),
    };
    out.json("manifest.json", &m)?;
    Ok(m)
}

pub fn run(cfg: &RunConfig) -> Result<Manifest> {
    run_in(cfg, &output_dir(cfg))
}
