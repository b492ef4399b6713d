use thiserror::Error;

/// Errors raised by the simulator and its building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The requested number of punctured subcarriers exceeds what the schedule can absorb.
    #[error("infeasible demand: {demand} SCs requested but only {capacity} allocated")]
    InfeasibleDemand { demand: usize, capacity: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Backward pass invoked with a cache produced by a different parameter version.
    #[error("stale activation cache (cache version {cache}, network version {network})")]
    StaleCache { cache: u64, network: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}
