use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    /// A configuration entry failed to parse or violates a constraint.
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    /// A selector could not produce a tuning parameter (e.g. every grid point
    /// is saturated for GCV).
    #[error("selection failed: {0}")]
    Selection(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed data in {}: {message}", path.display())]
    Data { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error stems from bad user input rather than a failure
    /// inside the library. The CLI maps this to its exit status.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::InvalidInput(_)
            | Error::DimensionMismatch { .. }
            | Error::Config { .. }
            | Error::Data { .. } => true,
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            Error::Selection(_) => false,
        }
    }
}
