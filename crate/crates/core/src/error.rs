//! Crate-wide error type.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the modelling and recognition pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file content, with the 1-based line it was found on.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Data violates a structural invariant (non-monotone time, out-of-range sample).
    #[error("integrity violation: {0}")]
    Integrity(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("stream too short: {0}")]
    TooShort(String),

    /// A start-time shift left no samples in the stream.
    #[error("empty stream: {0}")]
    EmptyStream(String),

    /// Cross-correlation is undefined (zero-variance input).
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    /// Two series expected to share a time grid do not.
    #[error("grid mismatch: {0}")]
    Alignment(String),

    #[error("filter design failed: {0}")]
    FilterDesign(String),

    /// EM or k-means could not produce a usable model.
    #[error("mixture fit failed: {0}")]
    Fit(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("model bundle version mismatch: found {found:?}, expected {expected:?}")]
    BundleVersion { found: String, expected: String },

    #[error("model bundle malformed: {0}")]
    BundleFormat(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
