use std::io;
use std::path::PathBuf;

use snes_core::apinn::ApinnError;
use snes_core::bench::BenchError;
use snes_core::oracle::OracleError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration or command-line values.
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Apinn(#[from] ApinnError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format { path: path.into(), msg: msg.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv { path: path.into(), source }
    }

    /// Whether the failure is the caller's input rather than the run itself.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Format { .. }
                | Error::Apinn(ApinnError::Config(_))
                | Error::Oracle(OracleError::InitialStorage(_) | OracleError::EmptyTrajectory)
        ) || matches!(self, Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound)
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
