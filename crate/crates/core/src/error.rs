use thiserror::Error;

/// Errors produced by the reconstruction toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("multi-Otsu needs at least {needed} distinct histogram levels, found {found}")]
    TooFewLevels { needed: usize, found: usize },

    #[error("training diverged at epoch {epoch}: loss is not finite (last finite loss {last_finite_loss:?})")]
    Diverged {
        epoch: usize,
        last_finite_loss: Option<f64>,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dims_mismatch(
    expected: impl std::fmt::Display,
    actual: impl std::fmt::Display,
) -> Error {
    Error::DimensionMismatch {
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
