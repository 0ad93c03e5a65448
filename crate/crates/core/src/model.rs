use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// Rates are clamped to this floor so the log-pmf stays finite even for
/// regimes the data never visits.
pub const RATE_FLOOR: f64 = 1e-10;

/// A `K`-state hidden Markov model with Poisson emissions.
///
/// The transition kernel is sticky-uniform: stay with probability `p`, else
/// move to one of the other `K - 1` states uniformly at random. The initial
/// distribution is fixed uniform `1/K` and is not a free parameter.
///
/// States are numbered `1..=K` at every public interface.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonHmm {
    rates: Vec<f64>,
    stay_prob: f64,
}

impl PoissonHmm {
    /// Build a model from per-state rates and a stay probability.
    ///
    /// Every rate must be at least [`RATE_FLOOR`]. `stay_prob` must lie
    /// strictly in `(0, 1)` when there are two or more states; for a
    /// single-state model it is ignored.
    pub fn new(rates: Vec<f64>, stay_prob: f64) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::InvalidStateCount { num_states: 0 });
        }
        for &rate in &rates {
            if !(rate >= RATE_FLOOR) {
                return Err(Error::RateBelowFloor {
                    rate,
                    floor: RATE_FLOOR,
                });
            }
        }
        if rates.len() >= 2 && !(stay_prob > 0.0 && stay_prob < 1.0) {
            return Err(Error::InvalidStayProb { stay_prob });
        }
        Ok(Self { rates, stay_prob })
    }

    /// Number of latent states `K`.
    pub fn num_states(&self) -> usize {
        self.rates.len()
    }

    /// Per-state Poisson rates, indexed `0..K` (state `k` externally is
    /// `rates()[k - 1]`).
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn stay_prob(&self) -> f64 {
        self.stay_prob
    }

    /// Rate of external state `state` (1-based).
    pub fn rate_of(&self, state: usize) -> Result<f64> {
        if state < 1 || state > self.rates.len() {
            return Err(Error::StateOutOfRange {
                state,
                num_states: self.rates.len(),
            });
        }
        Ok(self.rates[state - 1])
    }

    /// The model's `K x K` transition matrix.
    pub fn transition_matrix(&self) -> Vec<Vec<f64>> {
        // constructor already validated the arguments
        transition_matrix(self.rates.len(), self.stay_prob).expect("validated at construction")
    }
}

/// A decoded or simulated latent path: `T` states, each in `1..=K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSequence {
    states: Vec<usize>,
    num_states: usize,
}

impl StateSequence {
    /// Build from 1-based state labels.
    pub fn new(states: Vec<usize>, num_states: usize) -> Result<Self> {
        if num_states < 1 {
            return Err(Error::InvalidStateCount { num_states });
        }
        for &s in &states {
            if s < 1 || s > num_states {
                return Err(Error::StateOutOfRange {
                    state: s,
                    num_states,
                });
            }
        }
        Ok(Self { states, num_states })
    }

    /// 1-based state labels.
    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Log of the Poisson pmf: `x ln(rate) - rate - ln(x!)`, with the factorial
/// term computed through log-gamma so large counts stay exact in log space.
pub fn poisson_log_pmf(x: u64, rate: f64) -> Result<f64> {
    if !(rate >= RATE_FLOOR) {
        return Err(Error::RateBelowFloor {
            rate,
            floor: RATE_FLOOR,
        });
    }
    let xf = x as f64;
    Ok(xf * math::ln(rate) - rate - math::ln_gamma(xf + 1.0))
}

/// The sticky-uniform transition matrix: diagonal `p`, off-diagonal
/// `(1 - p) / (K - 1)`. For `K = 1` the matrix is `[[1.0]]` and `p` is
/// ignored.
pub fn transition_matrix(num_states: usize, stay_prob: f64) -> Result<Vec<Vec<f64>>> {
    if num_states < 1 {
        return Err(Error::InvalidStateCount { num_states });
    }
    if num_states == 1 {
        return Ok(alloc::vec![alloc::vec![1.0]]);
    }
    if !(stay_prob > 0.0 && stay_prob < 1.0) {
        return Err(Error::InvalidStayProb { stay_prob });
    }
    let off = (1.0 - stay_prob) / (num_states - 1) as f64;
    let rows = (0..num_states)
        .map(|i| {
            (0..num_states)
                .map(|j| if i == j { stay_prob } else { off })
                .collect()
        })
        .collect();
    Ok(rows)
}
