use thiserror::Error;

/// Errors raised by the library.
///
/// `Usage` covers invalid parameters or mismatched arguments, `Resource`
/// covers refusals by size guards (volume, open-edge count, enumeration size).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("resource guard: {0}")]
    Resource(String),
    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}
