use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("boundary mass {mass:.3e} exceeds threshold {threshold:.3e} at t = {time}")]
    BoundaryMass {
        mass: f64,
        threshold: f64,
        time: f64,
    },

    #[error("momentum cutoff {cutoff:.4} on axis {axis} is below the required {required:.4}")]
    Cutoff {
        axis: usize,
        cutoff: f64,
        required: f64,
    },

    #[error("limited-angle unsupported: {0}")]
    LimitedAngle(String),

    #[error("too few projection angles: {got} < {min}")]
    SparseAngles { got: usize, min: usize },

    #[error("only {valid} of {total} samples valid, below the required fraction {required}")]
    PartialFailure {
        valid: usize,
        total: usize,
        required: f64,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Coarse classification used by the command-line harness for exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidInput(_)
            | Error::GridMismatch(_)
            | Error::Cutoff { .. }
            | Error::LimitedAngle(_)
            | Error::SparseAngles { .. }
            | Error::Format(_) => ErrorKind::Validation,
            Error::BoundaryMass { .. } => ErrorKind::NumericalGuard,
            Error::PartialFailure { .. } => ErrorKind::PartialFailure,
            Error::Io(_) | Error::Json(_) => ErrorKind::Io,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    NumericalGuard,
    PartialFailure,
    Io,
}
