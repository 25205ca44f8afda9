use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("{what}: requested {requested}, but only {available} available")]
    OutOfRange {
        what: &'static str,
        requested: usize,
        available: usize,
    },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParam(msg.into())
}
