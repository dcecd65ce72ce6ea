use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("stencil window out of range: {0}")]
    OutOfRange(String),

    #[error("set sizes differ ({left} vs {right}); d_max is undefined")]
    SizeMismatch { left: usize, right: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("graph error: {0}")]
    Graph(String),

    #[error("thinning envelope {bound} below rate {rate} at t={t}")]
    Envelope { t: f64, rate: f64, bound: f64 },

    #[error("series too short: need at least {needed} days, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("empty evaluation window")]
    EmptyWindow,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
