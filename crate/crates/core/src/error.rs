use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::packet::MacAddr;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed fragment stream at index {index}: {reason}")]
    MalformedStream { index: usize, reason: String },

    #[error("unknown destination {0}: not present in forwarding table")]
    UnknownDestination(MacAddr),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("insufficient data: need at least {required} packets, got {actual}")]
    InsufficientData { required: usize, actual: usize },

    #[error("degenerate scale: all values equal {0}")]
    DegenerateScale(f64),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("config: {0}")]
    Config(String),

    #[error("missing input file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("window size {window}: {source}")]
    AtWindow {
        window: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for absent inputs, 3 for rejected input or
    /// configuration, 1 for anything that failed while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingFile(_) => 2,
            Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => 2,
            Error::Io { .. } | Error::Numeric(_) | Error::TrainingDiverged { .. } => 1,
            Error::AtWindow { source, .. } => source.exit_code(),
            _ => 3,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
