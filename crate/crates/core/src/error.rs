use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid stream, worker or scheduler configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid input to a metric or geometry routine.
    #[error("invalid input: {0}")]
    Input(String),

    /// A component was driven in a way its protocol forbids.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// A metric that cannot be computed from the given data.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// A malformed line in an input file.
    #[error("{origin}:{line}: {msg}")]
    Parse {
        origin: String,
        line: usize,
        msg: String,
    },

    /// A config or result file that parsed but failed validation.
    #[error("validation error in `{field}`: {msg}")]
    Validation { field: String, msg: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn validation(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
