use std::path::PathBuf;

use thiserror::Error;

use crate::metrics::MetricKind;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {format} data: {reason}")]
    Format {
        format: &'static str,
        reason: String,
    },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("coordinate ({x}, {y}) lies outside the image domain")]
    OutOfBounds { x: f64, y: f64 },

    #[error("coordinate ({x}, {y}) is too close to the image border")]
    Border { x: f64, y: f64 },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("metric {kind} is not supported here: {reason}")]
    Kind {
        kind: MetricKind,
        reason: &'static str,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("point selection kept {found} points, at least {required} are needed")]
    EmptySelection { found: usize, required: usize },

    #[error("normal equations are singular")]
    SingularNormalEquations,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            format,
            reason: reason.into(),
        }
    }
}
