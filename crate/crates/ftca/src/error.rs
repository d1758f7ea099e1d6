use std::io;

use thiserror::Error;

/// Parse failures of a `.ftcamodel` envelope.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvelopeError {
    #[error("unsupported format_version {found} (expected {expected})")]
    Version { found: String, expected: u32 },
    #[error("payload truncated: {found} of {expected} bytes")]
    Truncated { expected: usize, found: usize },
    #[error("payload checksum {actual:08x} does not match {expected:08x}")]
    Checksum { expected: u32, actual: u32 },
    #[error("malformed envelope: {0}")]
    Malformed(String),
}

/// Failures on the model-transfer wire.
#[derive(Debug, Error)]
pub enum NetError {
    #[error("frame body of {0} bytes exceeds the limit")]
    FrameTooLarge(usize),
    #[error("stream ended inside a frame")]
    IncompleteFrame,
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("peer replied with an error: {0}")]
    Remote(String),
    #[error("cannot connect to {addr}: {source}")]
    Connect { addr: String, source: io::Error },
    #[error("model payload rejected: {0}")]
    Deserialize(#[from] EnvelopeError),
    #[error("model payload is not a valid generator: {0}")]
    Model(ftca_core::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum FtcaError {
    #[error(transparent)]
    Core(#[from] ftca_core::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{path}: {source}")]
    File { path: String, source: io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}, column '{column}': cannot parse {value:?} as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("task file line {line}: {message}")]
    Task { line: usize, message: String },
    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = FtcaError> = std::result::Result<T, E>;

impl FtcaError {
    pub fn usage(msg: impl Into<String>) -> Self {
        FtcaError::Usage(msg.into())
    }

    pub(crate) fn file(path: &std::path::Path, source: io::Error) -> Self {
        FtcaError::File {
            path: path.display().to_string(),
            source,
        }
    }
}
