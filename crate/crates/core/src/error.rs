use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation's precondition (bad dimensions, bad `k`, mixed tree kinds...).
    #[error("usage error: {0}")]
    Usage(String),
    /// Malformed dataset input; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
