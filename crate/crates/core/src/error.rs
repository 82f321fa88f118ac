use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParams { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("solver produced a non-positive value at t={t}, q={q}; try more steps")]
    SolverFailure { t: f64, q: usize },

    #[error("eigenvalues {j} and {q} are degenerate (gap {gap:e}); fall back to the rk solver")]
    Degenerate { j: usize, q: usize, gap: f64 },

    #[error("no asymptotic quote: requires mu < gamma*sigma^2/2 (mu={mu}, gamma*sigma^2/2={bound})")]
    NoAsymptote { mu: f64, bound: f64 },

    #[error("formula requires {required}; got {got}")]
    Regime { required: &'static str, got: String },

    #[error("time {t} outside [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("quote is unbounded below at t = T")]
    Unbounded,

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}:{line}: {reason}")]
    Data {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("empty tape: {0}")]
    EmptyTape(PathBuf),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("target quote {target} not attainable; quotes span [{lo}, {hi}] over the gamma bracket")]
    NoSolution { target: f64, lo: f64, hi: f64 },

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParams {
            name,
            reason: reason.into(),
        }
    }

    /// Errors caused by bad input data rather than bad parameters.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Data { .. } | Error::EmptyTape(_) | Error::Calibration(_) | Error::Io(_)
        )
    }

    /// Errors caused by the user's invocation or config file.
    pub fn is_usage_error(&self) -> bool {
        matches!(self, Error::Config(_) | Error::UnknownName { .. })
    }
}
