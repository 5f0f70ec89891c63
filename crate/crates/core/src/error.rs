use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A value lies outside the range its representation can carry.
    #[error("value {value} is outside the range [{lo}, {hi}]")]
    Range { value: f64, lo: f64, hi: f64 },

    /// A switching probability of one (or more) can never be reached by a finite pulse.
    #[error("switching probability {0} is unreachable with a finite pulse")]
    UnreachableProbability(f64),

    /// A precondition of an operation was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A non-finite number was encountered.
    #[error("non-finite value encountered: {0}")]
    Numeric(f64),

    /// A file did not follow the expected binary layout.
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// Two related inputs disagree (for example image and label counts).
    #[error("inconsistent inputs: {0}")]
    Consistency(String),

    /// A configuration key or value was rejected.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
