use thiserror::Error;

/// Errors produced by the analysis and simulation routines.
#[derive(Debug, Error)]
pub enum IcaError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("unknown nonlinearity `{0}` (expected kurtosis, gauss, tanh, pow5 or pow7)")]
    UnknownNonlinearity(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The FastICA update `h(w)` vanished, so `f(w)` is undefined.
    #[error("FastICA update vanishes: |h(w)| = {norm:e}")]
    VanishingUpdate { norm: f64 },

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("not a fixed point: {0}")]
    NotAFixedPoint(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("extraction failed: {0}")]
    Extraction(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, IcaError>;
