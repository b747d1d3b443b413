use thiserror::Error;

/// Errors raised by the library.
///
/// The variants are grouped by how a caller is expected to react: invalid
/// input parameters, violated operation preconditions, hard invariant
/// failures, and I/O or schema problems. The CLI maps each group to its own
/// exit code through [`LabError::kind`].
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("degenerate segment: endpoints coincide")]
    DegenerateSegment,

    #[error("zero source distance between points {0} and {1}")]
    ZeroLength(usize, usize),

    #[error("precondition not met: {0}")]
    Precondition(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse classification of [`LabError`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Precondition,
    Violation,
    Schema,
}

impl LabError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            LabError::InvalidParams(_)
            | LabError::Capacity(_)
            | LabError::LengthMismatch { .. }
            | LabError::DegenerateSegment
            | LabError::ZeroLength(..)
            | LabError::Precondition(_) => ErrorKind::Precondition,
            LabError::NonFinite(_) | LabError::Invariant(_) => ErrorKind::Violation,
            LabError::Schema(_) | LabError::Io(_) | LabError::Json(_) | LabError::Csv(_) => {
                ErrorKind::Schema
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
