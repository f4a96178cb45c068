use std::io;

use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation precondition (shapes, ranges, arguments).
    #[error("usage error: {0}")]
    Usage(String),

    /// The Sakoe-Chiba band cannot reach the final cell of the cost matrix.
    #[error("infeasible band: width {band} cannot align lengths {n} and {m}")]
    InfeasibleBand { band: usize, n: usize, m: usize },

    /// Malformed input data. `location` is a line number or byte offset.
    #[error("ingestion error at {location}: {message}")]
    Ingestion { location: String, message: String },

    /// Invalid model or run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A metric had no elements left after masking.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Loss or gradient became NaN/inf; `name` is the offending parameter.
    #[error("non-finite value in {name}")]
    NonFinite { name: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn ingestion_line(line: usize, message: impl Into<String>) -> Self {
        Error::Ingestion {
            location: format!("line {line}"),
            message: message.into(),
        }
    }

    pub(crate) fn ingestion_offset(offset: usize, message: impl Into<String>) -> Self {
        Error::Ingestion {
            location: format!("byte offset {offset}"),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
