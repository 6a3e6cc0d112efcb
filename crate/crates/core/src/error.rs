use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum RmsError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("rank-deficient design matrix: {deficient} of {total} columns are linearly dependent")]
    RankDeficient { deficient: usize, total: usize },

    #[error("non-finite loss during {context} at epoch {epoch}: {loss}")]
    NonFinite {
        context: String,
        epoch: usize,
        loss: f64,
    },

    #[error("optimization failed: all {starts} starts produced non-finite values")]
    OptimizationFailed { starts: usize },

    #[error("experiment failed: {failures} of {total} replications failed (n = {n})")]
    ExperimentFailed {
        n: usize,
        failures: usize,
        total: usize,
    },

    #[error("near-zero vector cannot be normalized (norm {0:e})")]
    ZeroVector(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, RmsError>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(RmsError::Config(msg.into()))
}
