use std::path::PathBuf;

use thiserror::Error;

use crate::mask::MaskError;
use crate::metrics::MetricsError;
use crate::nn::NnError;
use crate::sampling::SamplingError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: malformed JSON: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}: object {object:?}: {message}", path.display())]
    Data {
        path: PathBuf,
        object: String,
        message: String,
    },
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn data(
        path: impl Into<PathBuf>,
        object: impl Into<String>,
        message: impl ToString,
    ) -> Self {
        Error::Data {
            path: path.into(),
            object: object.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for usage and configuration errors, 2 for data errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) | Error::Sampling(_) => 1,
            _ => 2,
        }
    }
}
