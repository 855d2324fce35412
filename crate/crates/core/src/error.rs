use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("series {0} has no readings left")]
    EmptySeries(String),

    #[error("no training data: {0}")]
    NoTrainingData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid batchnorm mode: {0}")]
    InvalidMode(String),

    #[error("non-finite value in {context}")]
    Numerical { context: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("version mismatch: {0}")]
    Version(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::InvalidMode(_) => 2,
            Error::Io { .. }
            | Error::Format(_)
            | Error::Parse { .. }
            | Error::EmptySeries(_)
            | Error::NoTrainingData(_)
            | Error::Version(_) => 3,
            Error::Numerical { .. } => 4,
        }
    }
}
