use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("out of range: {0}")]
    Range(String),

    #[error("input too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("labels contain a single class; both classes are required")]
    SingleClass,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown subject `{0}`")]
    UnknownSubject(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("subject `{0}` appears in both training and test data")]
    SubjectOverlap(String),

    #[error("difficulty state is not calibrated")]
    NotCalibrated,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unsupported model format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for errors caused by the data handed to the toolkit rather than
    /// by how it was invoked.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::InvalidParameter(_))
    }
}
