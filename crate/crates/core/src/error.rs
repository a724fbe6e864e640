//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Numeric argument outside the operation's domain (e.g. a
    /// non-positive distance).
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller broke an API contract (shape mismatch, power on a
    /// sleeping station, empty action set, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A size guard refused to run (e.g. exhaustive enumeration past the
    /// supported station count).
    #[error("guard exceeded: {0}")]
    Guard(String),

    /// The LP solver failed for a non-status reason (internal
    /// inconsistency rather than infeasibility/unboundedness).
    #[error("solver failure: {0}")]
    Solver(String),

    /// Invalid configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
