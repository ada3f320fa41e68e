//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand dimensions are incompatible.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A scalar argument is outside its allowed range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A set queried for members is provably empty.
    #[error("empty set: {0}")]
    EmptySet(String),

    /// Rejection sampling exhausted its budget without producing a member.
    #[error("emptiness suspected: {0}")]
    EmptinessSuspected(String),

    /// A full-row-rank requirement on a data matrix failed.
    #[error("rank condition violated: {0}")]
    RankDeficient(String),

    /// A linear system that should be consistent has a residual above tolerance.
    #[error("inconsistent data: {0}")]
    Inconsistent(String),

    /// The LP backend failed for a reason other than infeasibility.
    #[error("linear program failure: {0}")]
    LpFailure(String),

    /// An optimization problem that should be bounded is not.
    #[error("unbounded problem: {0}")]
    Unbounded(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
