use thiserror::Error;

/// Errors produced anywhere in the estimator pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("points must have at least one coordinate")]
    ZeroDimension,

    #[error("non-finite coordinate {value} at axis {axis}")]
    NonFinite { axis: usize, value: f64 },

    #[error("empty point set")]
    Empty,

    #[error("closure grid needs {required} bits, exceeding the cap of {cap} bits")]
    MemoryCap { required: u128, cap: u64 },

    #[error("rank tuple {index:?} is outside the grid shape {shape:?}")]
    OutOfBounds { index: Vec<usize>, shape: Vec<usize> },

    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),

    #[error("need at least {required} points, got {found}")]
    TooFewPoints { required: usize, found: usize },

    #[error("all coordinates have zero sample variance")]
    ZeroVariance,

    #[error("density must be positive here, got {value} at {point:?}")]
    NonPositiveDensity { point: Vec<f64>, value: f64 },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("no acceptable matrix after {0} attempts")]
    RejectionExhausted(usize),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("axis {axis} out of range for dimension {dims}")]
    AxisOutOfRange { axis: usize, dims: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("cross-validation failed: {0}")]
    CrossValidation(String),

    #[error("timed out after {elapsed_secs:.2}s (budget {budget_secs:.2}s)")]
    Timeout { elapsed_secs: f64, budget_secs: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
