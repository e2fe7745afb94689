use std::path::PathBuf;

use thiserror::Error;

use crate::linesearch::Probe;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("{path}: row {row}: label {label} out of range for {classes} classes")]
    LabelOutOfRange {
        path: PathBuf,
        row: usize,
        label: i64,
        classes: usize,
    },

    #[error("non-finite directional derivative at alpha = {alpha} after {} probes", trace.len())]
    NonFiniteDerivative { alpha: f64, trace: Vec<Probe> },

    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
