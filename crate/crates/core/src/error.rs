use thiserror::Error;

/// Errors raised by the survival toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: invalid time {value} (must be finite and non-negative)")]
    InvalidTime { row: usize, value: f64 },
    #[error("row {row}: invalid event indicator `{value}` (expected 0 or 1)")]
    InvalidEvent { row: usize, value: String },
    #[error("row {row}, column `{column}`: {reason}")]
    InvalidCell {
        row: usize,
        column: String,
        reason: String,
    },
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("feature `{0}` has no observed values")]
    NoObservedValues(String),
    #[error("{0} requires both classes to be present in the labels")]
    SingleClass(&'static str),
    #[error("{what} did not converge after {iterations} iterations (final gap {gap:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        gap: f64,
    },
    #[error("monotone likelihood detected (|beta| = {norm:.3e}); refit with a positive ridge penalty")]
    Separation { norm: f64 },
    #[error("non-finite values encountered: {0}")]
    NonFinite(String),
    #[error("censoring weight is zero at time {time}; restrict the evaluation grid")]
    ZeroCensoringWeight { time: f64 },
    #[error("no evaluation time had both cases and controls")]
    NoValidTimes,
    #[error("feature selection: {0}")]
    Selection(String),
    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
