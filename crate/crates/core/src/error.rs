use std::path::PathBuf;

/// Errors produced by the model, fitting, and analysis routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },

    #[error("invalid lifetime `{name}` = {tau_ns} ns: shorter than the radiative lifetime 1/gamma_es = {radiative_ns:.4} ns")]
    InvalidLifetime { name: &'static str, tau_ns: f64, radiative_ns: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid rate matrix: {0}")]
    InvalidMatrix(String),

    #[error("steady state is ambiguous: generator has {} decoupled closed blocks: {}", .blocks.len(), .blocks.join(" | "))]
    AmbiguousSteadyState { blocks: Vec<String> },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("cannot normalize: steady-state PL is zero (no optical pumping)")]
    CannotNormalize,

    #[error("invalid time grid: {0}")]
    InvalidTimes(&'static str),

    #[error("not enough data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("rank-deficient design: {0}")]
    RankDeficient(&'static str),

    #[error("trace never crosses the onset threshold")]
    NoThresholdCrossing,

    #[error("AOM rise not found: no positive-to-negative derivative change after the threshold crossing")]
    RiseNotFound,

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("no grid point within the P_NV0 band {lo:.4}..={hi:.4}")]
    EmptyBand { lo: f64, hi: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    /// `at` is the key path of the offending value, if known.
    #[error("{path}: {at}{source}")]
    Json {
        path: PathBuf,
        at: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_rate(name: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::InvalidParameter { name, value, reason: "must be finite" });
    }
    if value < 0.0 {
        return Err(Error::InvalidParameter { name, value, reason: "rates must be non-negative" });
    }
    Ok(())
}

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::InvalidParameter { name, value, reason: "must lie in [0, 1]" });
    }
    Ok(())
}
