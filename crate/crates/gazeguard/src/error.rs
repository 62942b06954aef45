use std::path::PathBuf;

/// Crate-wide error type. Variants map onto the CLI exit codes:
/// configuration/argument problems exit 1, input-data problems exit 2,
/// numerical/state failures exit 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint error in {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("structure error: {0}")]
    Structure(String),

    #[error("state error: {0}")]
    State(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error per the CLI contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Argument(_) => 1,
            Error::Data(_) | Error::Checkpoint { .. } | Error::Structure(_) | Error::Io { .. } => 2,
            Error::State(_) | Error::Numeric(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
