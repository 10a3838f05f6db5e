use alloc::string::String;

use crate::linalg::Shape;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: Shape, right: Shape },
    #[error("buffer of length {len} does not fit shape {shape}")]
    BadLength { shape: Shape, len: usize },
    #[error("{op} requires a matrix, got {shape}")]
    NotMatrix { op: &'static str, shape: Shape },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("non-finite {quantity} at step {step}")]
    NonFiniteStep { quantity: &'static str, step: u64 },
    #[error("SVD did not converge")]
    SvdNoConvergence,
    #[error("cannot orthogonalize the zero matrix")]
    ZeroMatrix,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("group count mismatch: expected {expected}, got {got}")]
    GroupMismatch { expected: usize, got: usize },
}

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidParameter(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
