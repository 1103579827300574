use thiserror::Error;

/// Errors raised by the inference library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("anchor coincides with site {0}")]
    AnchorCoincident(usize),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension {dim} exceeds the limit of {max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("differentiated block is empty")]
    EmptyBlock,
    #[error("partition ground set does not match the observed indices")]
    PartitionMismatch,
    #[error("partitions are defined over different ground sets")]
    GroundMismatch,
    #[error("value {0} lies outside the distribution support")]
    OutOfSupport(f64),
    #[error("shape parameter {0} must be below 1 for the mean to exist")]
    ShapeTooLarge(f64),
    #[error("optimizer failed to converge: {0}")]
    NonConvergence(String),
    #[error("occurrence record has no days")]
    EmptyDays,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures caused by inputs (as opposed to numerical breakdowns).
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::NotPositiveDefinite | Error::NonConvergence(_) | Error::OutOfSupport(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
