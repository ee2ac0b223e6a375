//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by ingestion, featurization, and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    /// A raw input record could not be parsed or violates a basic field
    /// invariant. `line` is 1-based when known.
    #[error("ingestion error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Ingest { line: Option<usize>, msg: String },

    /// A configuration value violates its declared invariant.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Vector/matrix shapes do not agree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Training labels contain a single class.
    #[error("degenerate labels: both classes required")]
    DegenerateLabels,

    /// A matrix or score vector contains NaN or infinity.
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    /// An operation that requires data received none.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A metric is undefined for the given counts (e.g. no positives).
    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    /// No ensemble member leaves any row out-of-bag.
    #[error("no out-of-bag coverage: B too small")]
    NoOobCoverage,

    /// A numerical routine failed to produce a usable result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
