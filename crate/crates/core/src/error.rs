use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("scale count J={j} too large for a {width}x{height} grid")]
    ScaleTooLarge { j: usize, width: usize, height: usize },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("zero variance in coordinate {0}")]
    ZeroVariance(usize),

    #[error("covariance matrix is singular (pivot {pivot} at row {row}); supply a ridge")]
    SingularCovariance { row: usize, pivot: f64 },

    #[error("symmetric positive-definite solve failed at row {row}; increase the ridge")]
    SolveFailure { row: usize },

    #[error("iteration diverged: {0}")]
    Divergence(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_mismatch(expected: impl std::fmt::Debug, found: impl std::fmt::Debug) -> Error {
    Error::ShapeMismatch {
        expected: format!("{expected:?}"),
        found: format!("{found:?}"),
    }
}
