//! Error type shared across the crate.

use crate::profile::MixedProfile;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A profile, vector, or matrix does not match the game's shape.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An input is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An argument is of the right shape but semantically invalid.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A game constructor was given inconsistent data.
    #[error("construction error: {0}")]
    Construction(String),

    /// A stated precondition (e.g. "q is a fixed point") does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The instance is too large for an exhaustive procedure.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// A required configuration value is missing or unusable.
    #[error("configuration error: {0}")]
    Config(String),

    /// The integrator produced a non-finite state. Carries the last good
    /// sample so callers can report how far the run got.
    #[error("numerical failure at t = {t}: {message}")]
    Numerical {
        t: f64,
        message: String,
        last_good: Box<(f64, MixedProfile)>,
    },
}
