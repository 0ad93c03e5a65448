use alloc::vec::Vec;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::model::{PoissonHmm, StateSequence};
use crate::series::ObservationSeries;
use crate::{Error, Result};

/// Draw a latent path and matching counts from the generative model.
///
/// The initial state is uniform over `1..=K`; each subsequent state follows
/// the sticky-uniform transition row; each count is Poisson with the rate of
/// the day's state. Output is bit-identical for a fixed seed.
pub fn simulate(
    model: &PoissonHmm,
    num_days: usize,
    seed: u64,
    start_date: NaiveDate,
) -> Result<(StateSequence, ObservationSeries)> {
    if num_days < 1 {
        return Err(Error::EmptySeries);
    }
    let k = model.num_states();
    let transition = model.transition_matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut states = Vec::with_capacity(num_days);
    let mut counts = Vec::with_capacity(num_days);
    let mut current = rng.random_range(0..k);
    for _ in 0..num_days {
        states.push(current + 1);
        let rate = model.rates()[current];
        let draw: f64 = Poisson::new(rate)
            .expect("rates are at least RATE_FLOOR")
            .sample(&mut rng);
        counts.push(draw as u64);
        current = step(&transition[current], &mut rng);
    }

    Ok((
        StateSequence::new(states, k)?,
        ObservationSeries::new(start_date, counts)?,
    ))
}

/// Sample a next state from one transition row by inverse CDF walk.
fn step<R: Rng>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (j, &p) in row.iter().enumerate() {
        cum += p;
        if u < cum {
            return j;
        }
    }
    row.len() - 1
}
