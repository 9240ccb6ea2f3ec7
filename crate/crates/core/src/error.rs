use thiserror::Error;

/// Errors raised by the solvers and diagnostics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension n = {0} is not supported (need n >= 4)")]
    Dimension(usize),
    #[error("invalid parameter `{name}`: {reason}")]
    Param { name: &'static str, reason: String },
    #[error("adaptive integrator stalled at {reached} (target {target})")]
    NonConvergence { reached: f64, target: f64 },
    #[error("range exhausted: {0}")]
    Range(String),
    #[error("profile became nonpositive in the interior at z = {z} (t = {t})")]
    Pinch { z: f64, t: f64 },
    #[error("time step {dt} exceeds the stability bound {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("history too short: need {need} states, got {got}")]
    HistoryTooShort { need: usize, got: usize },
    #[error("incompatible grids: {0}")]
    Grid(String),
    #[error("monotonicity violated on [{lo}, {hi}]")]
    Monotonicity { lo: f64, hi: f64 },
    #[error("condition never satisfied: {0}")]
    NotSatisfied(String),
    #[error("newton iteration failed after {iterations} steps (residual {residual:e})")]
    Newton { iterations: usize, residual: f64 },
    #[error("triplet is not admissible: {0}")]
    Inadmissible(String),
    /// `line` is 0 for command-line flags and defaults.
    #[error("{}, field `{field}`: {msg}", config_origin(*line))]
    Config { line: usize, field: String, msg: String },
    #[error("io: {0}")]
    Io(String),
}

fn config_origin(line: usize) -> String {
    if line == 0 {
        "command line or default".into()
    } else {
        format!("config line {line}")
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_dim(n: usize) -> Result<()> {
    if n < 4 {
        Err(Error::Dimension(n))
    } else {
        Ok(())
    }
}

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Param { name, reason: reason.into() }
}
