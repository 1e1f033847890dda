use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("validation failed for patient {patient}: {rule} ({detail})")]
    Validation {
        patient: String,
        rule: String,
        detail: String,
    },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("jump total {total} exceeds the segment limit {limit}")]
    JumpLimit { total: usize, limit: usize },

    #[error("unknown patient {0}")]
    UnknownPatient(String),

    #[error("holdout of {requested} patients requested but only {eligible} have five rounds")]
    Holdout { requested: usize, eligible: usize },

    #[error("count {0} exceeds the supported maximum of 1000000")]
    CountOverflow(u64),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for numerical failures such as a non-finite log-posterior.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
