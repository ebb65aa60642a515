use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad flags, invalid or inconsistent configuration.
    #[error("{0}")]
    Usage(String),
    /// Malformed or incompatible input data.
    #[error("{path}: {source}")]
    Data {
        path: PathBuf,
        #[source]
        source: hienet_core::Error,
    },
    #[error("{0}")]
    Incompatible(String),
    /// Training produced a NaN or infinite loss.
    #[error("{0}")]
    NonFinite(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Model(#[from] hienet_core::Error),
}

impl HarnessError {
    /// Process exit code: 1 for usage and configuration problems, 2 for
    /// data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => 1,
            HarnessError::Model(hienet_core::Error::Config(_)) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
        move |source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn json(path: &Path) -> impl FnOnce(serde_json::Error) -> HarnessError + '_ {
        move |source| HarnessError::Json {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub(crate) fn usage(msg: impl Into<String>) -> HarnessError {
    HarnessError::Usage(msg.into())
}
