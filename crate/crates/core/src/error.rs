use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("breakpoints must be sorted in increasing order")]
    UnsortedBreakpoints,

    #[error("smoothing parameter must be positive, got {0}")]
    NonPositiveEpsilon(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field length {got} does not match grid with {expected} interior nodes")]
    ShapeMismatch { expected: usize, got: usize },

    /// Cholesky breakdown; the assembled operator is singular or indefinite.
    #[error("factorization broke down at row {row} (pivot {pivot:e})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("need at least {needed} mesh levels, got {got}")]
    TooFewLevels { needed: usize, got: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
