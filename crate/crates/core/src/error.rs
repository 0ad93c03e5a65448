use thiserror::Error;

/// Errors from constructing or combining domain values.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("rate {rate} is below the floor {floor}")]
    RateBelowFloor { rate: f64, floor: f64 },

    #[error("number of states must be at least 1, got {num_states}")]
    InvalidStateCount { num_states: usize },

    #[error("stay probability must lie strictly in (0, 1), got {stay_prob}")]
    InvalidStayProb { stay_prob: f64 },

    #[error("observation series must contain at least one count")]
    EmptySeries,

    #[error("state index {state} outside [1, {num_states}]")]
    StateOutOfRange { state: usize, num_states: usize },

    #[error("sequence length {actual} does not match expected length {expected}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid fit configuration: {reason}")]
    InvalidFitConfig { reason: &'static str },
}
