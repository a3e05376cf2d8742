use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("observation at t={ts} s precedes last processed observation at t={last} s")]
    OutOfOrder { last: f64, ts: f64 },

    #[error("input not sorted by timestamp at index {index}")]
    Unsorted { index: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("problem too large for exhaustive oracle: {0}")]
    SizeLimit(String),

    #[error("no ground truth for result: tag {tag} session [{start_s}, {stop_s}]")]
    MissingTruth { tag: String, start_s: f64, stop_s: f64 },

    /// A record in an input file could not be decoded.
    #[error("{path}:{line}: {msg}")]
    Schema { path: String, line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by bad input rather than a runtime failure.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}
