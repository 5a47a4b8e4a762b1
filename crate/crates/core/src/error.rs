//! Error types shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulator, the inference stack, and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A vector or matrix argument did not match the model dimensions.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An argument violated a documented precondition.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Steady-state probabilities are undefined when both transition
    /// probabilities of an event are zero.
    #[error("undefined steady state for event {event}: eps0 + eps1 = 0")]
    UndefinedSteadyState { event: usize },

    /// A forward update zeroed every posterior weight; the observation is
    /// impossible under the current parameters.
    #[error("observation inconsistent with model: all posterior weights vanished")]
    InconsistentObservation,

    /// The request exceeds a hard size guard (e.g. too many events for exact
    /// joint-state enumeration).
    #[error("capability exceeded: {0}")]
    CapabilityExceeded(String),

    /// Not enough observations to run an estimation step.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Experiment configuration failed validation; `field` names the bad entry.
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    /// An I/O failure, annotated with the path involved.
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Manifest or series serialization failed.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Config file could not be parsed.
    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
