//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input violated a documented precondition.
    #[error("validation: {0}")]
    Validation(String),

    /// Array shapes are inconsistent with the operation's contract.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Filesystem failure; wraps the offending path.
    #[error("i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// File does not start with the expected magic bytes.
    #[error("{path}: bad magic (not a {expected} file)")]
    BadMagic { path: PathBuf, expected: &'static str },

    /// Unsupported dtype code in a raster header.
    #[error("{path}: unknown dtype code {code}")]
    UnknownDtype { path: PathBuf, code: u8 },

    /// Payload shorter than the header promises.
    #[error("{path}: truncated (expected {expected} bytes, got {got})")]
    Truncated {
        path: PathBuf,
        expected: usize,
        got: usize,
    },

    /// Structured file failed to parse for a reason other than the above.
    #[error("{path}: parse error: {reason}")]
    Parse { path: PathBuf, reason: String },

    /// The VARPRO design matrix is (numerically) rank deficient.
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    /// Statistics routine called with too few samples.
    #[error("too few samples: {0}")]
    TooFewSamples(String),

    /// Statistics routine called on data with no variance.
    #[error("zero variance: {0}")]
    ZeroVariance(String),

    /// Run configuration is malformed or inconsistent.
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
