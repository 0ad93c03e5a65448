//! Switching-Poisson hidden Markov model.
//!
//! A count series is modeled as Poisson-distributed daily events whose rate
//! jumps among a finite set of values as an unobserved regime state evolves
//! under a sticky-uniform transition kernel. The crate provides:
//!
//! - domain types ([`ObservationSeries`], [`PoissonHmm`], [`StateSequence`]),
//! - a seeded simulator for the generative model,
//! - exact message passing: marginal likelihood, posterior state marginals,
//!   marginal-MAP and Viterbi decoding,
//! - EM rate fitting for a fixed number of states, and marginal-likelihood
//!   selection of the number of states.
//!
//! All recursions run in log space with log-sum-exp reductions, so long
//! series with extreme rates stay finite. Everything is a pure function of
//! its inputs (the simulator and fitter are pure given a seed); values are
//! immutable after construction and safe to share across threads.
//!
//! The crate is `no_std` + `alloc`; IO and file formats live in the
//! companion CLI crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
mod fit;
mod inference;
mod math;
mod model;
mod series;
mod simulate;

pub use error::Error;
pub use fit::{em_fit, select_num_states, FitConfig, FitResult, ModelCandidate, ModelSelectionReport};
pub use inference::{
    log_marginal_likelihood, map_states, posterior_marginals, rate_path, viterbi,
    PosteriorMarginals,
};
pub use model::{poisson_log_pmf, transition_matrix, PoissonHmm, StateSequence, RATE_FLOOR};
pub use series::ObservationSeries;
pub use simulate::simulate;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;
