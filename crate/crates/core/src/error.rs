use thiserror::Error;

use crate::sim::SimTime;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid scenario or module configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("causality violation: event scheduled at {requested} while clock is at {now}")]
    Causality { now: SimTime, requested: SimTime },

    /// A runtime invariant check failed (conservation, MU EDCA, ...).
    #[error("invariant breach: {0}")]
    Invariant(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors that indicate a bug or broken invariant inside a run,
    /// as opposed to bad input.
    pub fn is_runtime_breach(&self) -> bool {
        matches!(self, Error::Contract(_) | Error::Causality { .. } | Error::Invariant(_))
    }
}
