use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cell extends outside the measure support in dimension {dim}: [{lo}, {hi})")]
    OutsideSupport { dim: usize, lo: f64, hi: f64 },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("exact enumeration infeasible for d = {0}; use a Monte Carlo estimate instead")]
    EnumerationTooLarge(usize),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("pool ingestion: {0}")]
    Ingest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
