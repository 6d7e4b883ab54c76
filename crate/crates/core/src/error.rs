use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("origin regularity violated: {0}")]
    RegularityViolation(String),

    #[error("radius {r} outside the sampled domain [0, {s_max}]")]
    OutOfDomain { r: f64, s_max: f64 },

    #[error("distance not converged: levels differ by {difference:.3e} (tolerance {tolerance:.3e})")]
    NotConverged { difference: f64, tolerance: f64 },

    #[error("step rejected at t = {t}: {reason} (blow-up estimate {blowup_estimate:?})")]
    StepRejected {
        t: f64,
        reason: String,
        blowup_estimate: Option<f64>,
    },

    #[error("shrinking sphere extinct: t = {t} >= r0^2/4 = {extinction}")]
    Extinct { t: f64, extinction: f64 },

    #[error("reaction ODE blew up in ({t_low}, {t_high})")]
    BlowUp { t_low: f64, t_high: f64 },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("domain too small: {0}")]
    DomainTooSmall(String),

    #[error("dual-route mismatch at s = {s}: relative error {rel_err:.3e}")]
    OracleMismatch { s: f64, rel_err: f64 },

    #[error("log-space evaluation overflowed at radius {radius}")]
    Overflow { radius: f64 },

    #[error("shooting failed: {0}")]
    ShootingFailed(String),

    #[error("metric space violates the triangle inequality by {excess:.3e}")]
    MetricViolation { excess: f64 },

    #[error("space too large for exhaustive search: {size} points (cap {cap})")]
    TooLarge { size: usize, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
