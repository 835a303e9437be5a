//! Error classification into process exit codes.

use drunet_core::Error;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub const USER: u8 = 1;
    pub const DATA: u8 = 2;
    pub const INTERNAL: u8 = 3;

    pub fn user(message: impl Into<String>) -> Self {
        Self {
            code: Self::USER,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: Self::DATA,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self {
            code: Self::INTERNAL,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Usage(_) | Error::Config(_) => Self::USER,
            Error::Shape(_)
            | Error::Data(_)
            | Error::Degenerate(_)
            | Error::Format { .. }
            | Error::ChannelCount { .. }
            | Error::BitDepth { .. }
            | Error::Gap { .. }
            | Error::NonFinite { .. }
            | Error::Io { .. } => Self::DATA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::internal(format!("serializing manifest: {e}"))
    }
}

pub fn io(path: &std::path::Path, e: std::io::Error) -> Failure {
    Failure::from(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

impl Failure {
    pub fn prefixed(self, context: &str) -> Self {
        Self {
            code: self.code,
            message: format!("{context}: {}", self.message),
        }
    }
}
