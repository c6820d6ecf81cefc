use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the domain of an operation (zero vector, non-finite value, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A structural or mathematical invariant was found violated.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// Grid mask inconsistent with the stencil of an interior node.
    #[error("mask integrity error at node ({i}, {j}): {reason}")]
    Mask { i: usize, j: usize, reason: String },

    /// Experiment setup rejected before any computation.
    #[error("setup error: {0}")]
    Setup(String),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("linear solver failure: {0}")]
    Linear(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        name,
        reason: reason.into(),
    }
}
