use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index:?} out of bounds for dims {dims:?}")]
    Bounds { index: Vec<usize>, dims: Vec<usize> },

    /// Malformed or unsupported MetaImage header / payload. `key` names the
    /// offending header key (or `ElementDataFile` for payload problems).
    #[error("MetaImage format error in `{key}`: {message}")]
    Format { key: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The input is well-formed but the operation is undefined on it
    /// (empty class mask, degenerate histogram, ...).
    #[error("{0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// A phantom generator could not satisfy its placement constraints.
    #[error("phantom generation failed: {0}")]
    Generation(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(key: &str, message: impl Into<String>) -> Self {
        Error::Format {
            key: key.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn argument(message: impl Into<String>) -> Self {
        Error::Argument(message.into())
    }

    pub(crate) fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }
}
