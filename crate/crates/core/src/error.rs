use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for the requested operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// Input data violates a domain constraint (label range, value domain, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Statistics cannot be computed because the volume has no spread.
    #[error("degenerate statistics: {0}")]
    Degenerate(String),

    /// The API was called in a way its contract forbids.
    #[error("usage error: {0}")]
    Usage(String),

    /// A model or optimizer was configured with invalid values.
    #[error("config error: {0}")]
    Config(String),

    /// A file does not follow the expected container layout.
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{path}: expected {expected} channels, found {found}")]
    ChannelCount {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("{path}: expected {expected}-bit samples, found {found}-bit")]
    BitDepth {
        path: PathBuf,
        expected: u8,
        found: u8,
    },

    #[error("missing slice: gap at {index}")]
    Gap { index: usize },

    #[error("training diverged: loss is {loss} at batch {batch} of epoch {epoch}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
