use thiserror::Error;

/// Errors raised by the estimation, scoring and inference routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty data")]
    EmptyData,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid time horizon: {0}")]
    InvalidHorizon(String),

    #[error("singular design")]
    SingularDesign,

    #[error(
        "Newton-Raphson did not converge after {iterations} iterations \
         (gradient max-norm {gradient_norm:.3e})"
    )]
    NoConvergence { iterations: usize, gradient_norm: f64 },

    #[error("censoring support exhausted at observation {index}: 1 - G = {survival:.3e}")]
    CensoringSupportExhausted { index: usize, survival: f64 },

    #[error("no effective sample")]
    NoEffectiveSample,

    #[error("no effective events before the time horizon")]
    NoEffectiveEvents,

    #[error("degenerate statistic: variance estimate is zero (consider jitter)")]
    DegenerateStatistic,

    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
