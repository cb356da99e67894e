//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an operation's arguments was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A dataset file failed to parse or its header disagrees with its payload.
    #[error("dataset format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// An integrator failed (step failure or non-finite state detected).
    #[error("simulation error: {0}")]
    Simulation(String),

    /// A trigonometric noise multiplier vanished, so the continuum bias map
    /// is not invertible for this library/noise combination.
    #[error("singular bias: {0}")]
    SingularBias(String),

    /// An exhaustive enumeration was requested beyond its size budget.
    #[error("enumeration budget exceeded: {0}")]
    Budget(String),
}

pub type Result<T> = std::result::Result<T, Error>;
