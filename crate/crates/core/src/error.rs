use thiserror::Error;

/// Errors raised by the harmonic modeling and synthesis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("fundamental frequency mismatch: {0} vs {1}")]
    OmegaMismatch(f64, f64),

    #[error("operator must be square, got {rows}x{cols} blocks")]
    NotSquare { rows: usize, cols: usize },

    #[error("insufficient sampling: {got} samples, need at least {need}")]
    InsufficientSampling { got: usize, need: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("truncation order too low: found {found} recurring eigenvalue ladders, need {need}")]
    OrderTooLow { found: usize, need: usize },

    #[error("system is not stable: {0}")]
    Unstable(String),

    #[error("near-singular matrix (condition estimate {condition:.3e}): {context}")]
    NearSingular { condition: f64, context: String },

    #[error("rank deficient system, singular values {singular_values:?}")]
    RankDeficient { singular_values: Vec<f64> },

    #[error("H2 norm undefined: feedthrough Dzw is nonzero")]
    FeedthroughNonzero,

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("operator inversion failed: {0}")]
    Inversion(String),

    #[error("closed loop is unstable, max core real part {0:.4e}")]
    UnstableClosedLoop(f64),

    #[error("integration aborted: {0}")]
    Integration(String),

    #[error("consistency violation: {0}")]
    Consistency(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
