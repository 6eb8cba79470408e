use thiserror::Error;

/// Errors surfaced by every fallible operation in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Malformed or out-of-domain input (bad index, infeasible point, negative weight).
    #[error("invalid input: {0}")]
    Input(String),
    /// An exact enumeration path was asked to run above its configured size cap.
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    /// Non-finite values or a numerical procedure that could not reach its target.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// A caller-side precondition of the operation does not hold.
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn capacity(msg: impl Into<String>) -> Self {
        Error::Capacity(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
