use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit count mismatch: {0} vs {1}")]
    QubitMismatch(usize, usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("operator couples sector {from} to sector {to} with element {magnitude:.3e}")]
    CrossSector { from: usize, to: usize, magnitude: f64 },

    #[error("padding value {padding} is an extreme eigenvalue of the padded block (genuine range [{low}, {high}])")]
    PaddingExtreme { padding: f64, low: f64, high: f64 },

    #[error("state is not normalized: norm {0}")]
    NotNormalized(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
