use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension m = {0} outside the supported range [2, {max}]", max = crate::set_family::MAX_DIM)]
    DimensionOutOfRange(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("subset mask {bits:#b} does not fit in dimension {m}")]
    SubsetOutOfRange { bits: u32, m: usize },

    #[error("the empty subset cannot be a member of a family")]
    EmptySubset,

    #[error("family is not upward-closed: {0}")]
    NotMonotone(String),

    #[error("enumeration of monotone families is limited to m <= 5 (got {0})")]
    EnumerationTooLarge(usize),

    #[error("point coordinate {value} at index {index} is outside [0, 1]")]
    PointOutsideCube { index: usize, value: f64 },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("degenerate problem: lambda = {0:e} is not positive")]
    DegenerateLambda(f64),

    #[error("dependence function violates its boundary conditions: |F(x)| = {value:e} at {point:?}")]
    BoundaryViolation { point: Vec<f64>, value: f64 },

    #[error("point {0:?} is too close to the boundary for the finite-difference stencil")]
    TooCloseToBoundary(Vec<f64>),

    #[error("missing face restriction for subset {0}")]
    MissingFace(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("ties detected in column {column}")]
    Ties { column: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigenvalue problem too large: {size} nodes exceeds the cap of {cap}")]
    GridTooLarge { size: usize, cap: usize },

    #[error("power iteration did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("Cholesky factorization failed after ridge escalation")]
    CholeskyFailed,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            Error::Io(e.to_string())
        } else {
            Error::Parse(e.to_string())
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl Error {
    /// True when the error comes from I/O rather than from invalid input.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}
