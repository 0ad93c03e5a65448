//! Exact message passing for a fixed model: forward-backward in log space,
//! posterior state marginals, marginal-MAP and joint-MAP (Viterbi) decoding.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{exp, ln, log_sum_exp};
use crate::model::{poisson_log_pmf, PoissonHmm, StateSequence};
use crate::series::ObservationSeries;
use crate::Result;

/// Per-step posterior state probabilities `gamma[t][k] = p(Z_t = k | x_{1:T})`.
///
/// Rows are normalized to sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMarginals {
    gamma: Vec<f64>,
    num_days: usize,
    num_states: usize,
}

impl PosteriorMarginals {
    pub fn num_days(&self) -> usize {
        self.num_days
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// The `K` posterior probabilities of day `t` (0-based).
    pub fn row(&self, t: usize) -> &[f64] {
        &self.gamma[t * self.num_states..(t + 1) * self.num_states]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.gamma.chunks_exact(self.num_states)
    }
}

/// `T x K` emission log-probabilities, row-major.
fn emission_log_probs(series: &ObservationSeries, model: &PoissonHmm) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len() * model.num_states());
    for &x in series.counts() {
        for &rate in model.rates() {
            out.push(poisson_log_pmf(x, rate).expect("model rates are above the floor"));
        }
    }
    out
}

/// One sticky-uniform message step, in place: given log-values `v`, replace
/// each entry with `ln Σ_j A_{jk} exp(v_j)`.
///
/// The kernel has only two distinct entries (stay `p`, move `q`), so the
/// matrix-vector product collapses to `q (S - exp(v_k)) + p exp(v_k)` with
/// `S = Σ exp(v_j)`, one exp per state instead of `K`.
fn sticky_step(values: &mut [f64], stay: f64, scratch: &mut [f64]) {
    let k = values.len();
    if k == 1 {
        return;
    }
    let q = (1.0 - stay) / (k - 1) as f64;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return;
    }
    let mut total = 0.0;
    for (slot, &v) in scratch.iter_mut().zip(values.iter()) {
        *slot = exp(v - max);
        total += *slot;
    }
    for (v, &e) in values.iter_mut().zip(scratch.iter()) {
        *v = max + ln(q * (total - e) + stay * e);
    }
}

/// Forward recursion. Returns the `T x K` log-alpha table and the data
/// log-likelihood `log p(x_{1:T} | lambda)`.
fn forward(log_emit: &[f64], t_len: usize, k: usize, stay: f64) -> (Vec<f64>, f64) {
    let log_init = -ln(k as f64);

    let mut log_alpha = vec![0.0; t_len * k];
    for s in 0..k {
        log_alpha[s] = log_init + log_emit[s];
    }
    let mut msg = vec![0.0; k];
    let mut scratch = vec![0.0; k];
    for t in 1..t_len {
        msg.copy_from_slice(&log_alpha[(t - 1) * k..t * k]);
        sticky_step(&mut msg, stay, &mut scratch);
        for s in 0..k {
            log_alpha[t * k + s] = msg[s] + log_emit[t * k + s];
        }
    }
    let ll = log_sum_exp(&log_alpha[(t_len - 1) * k..]);
    (log_alpha, ll)
}

/// Backward recursion: the `T x K` log-beta table.
fn backward(log_emit: &[f64], t_len: usize, k: usize, stay: f64) -> Vec<f64> {
    let mut log_beta = vec![0.0; t_len * k];
    let mut msg = vec![0.0; k];
    let mut scratch = vec![0.0; k];
    for t in (0..t_len - 1).rev() {
        for s in 0..k {
            msg[s] = log_emit[(t + 1) * k + s] + log_beta[(t + 1) * k + s];
        }
        // the kernel is symmetric, so the reverse product has the same form
        sticky_step(&mut msg, stay, &mut scratch);
        log_beta[t * k..(t + 1) * k].copy_from_slice(&msg);
    }
    log_beta
}

/// `log p(x_{1:T} | lambda)`: the latent path sum computed exactly by the
/// forward recursion, entirely in log space.
pub fn log_marginal_likelihood(series: &ObservationSeries, model: &PoissonHmm) -> f64 {
    let log_emit = emission_log_probs(series, model);
    forward(&log_emit, series.len(), model.num_states(), model.stay_prob()).1
}

/// Posterior state marginals by forward-backward, row-normalized.
pub fn posterior_marginals(series: &ObservationSeries, model: &PoissonHmm) -> PosteriorMarginals {
    forward_backward(series, model).0
}

/// Marginals plus the data log-likelihood from one message pass; the EM
/// loop needs both per iteration.
pub(crate) fn forward_backward(
    series: &ObservationSeries,
    model: &PoissonHmm,
) -> (PosteriorMarginals, f64) {
    let t_len = series.len();
    let k = model.num_states();
    let log_emit = emission_log_probs(series, model);
    let (log_alpha, ll) = forward(&log_emit, t_len, k, model.stay_prob());
    let log_beta = backward(&log_emit, t_len, k, model.stay_prob());

    let mut gamma = vec![0.0; t_len * k];
    for t in 0..t_len {
        let row = &mut gamma[t * k..(t + 1) * k];
        for s in 0..k {
            row[s] = exp(log_alpha[t * k + s] + log_beta[t * k + s] - ll);
        }
        let sum: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    (
        PosteriorMarginals {
            gamma,
            num_days: t_len,
            num_states: k,
        },
        ll,
    )
}

/// Per-step marginal-MAP decoding: `states[t] = argmax_k gamma[t][k]`, ties
/// broken toward the lowest state index. Note this is not the joint MAP
/// path; see [`viterbi`] for that.
pub fn map_states(marginals: &PosteriorMarginals) -> StateSequence {
    let states = marginals
        .rows()
        .map(|row| argmax_lowest(row) + 1)
        .collect();
    StateSequence::new(states, marginals.num_states).expect("argmax is within [1, K]")
}

/// Rate of the decoded state at each step.
pub fn rate_path(states: &StateSequence, model: &PoissonHmm) -> Result<Vec<f64>> {
    states
        .states()
        .iter()
        .map(|&s| model.rate_of(s))
        .collect()
}

/// Joint-MAP decoding: `argmax_{z_{1:T}} p(z_{1:T} | x_{1:T}, lambda)` by
/// max-product recursion in log space, ties toward the lowest state index at
/// each backtrack step.
pub fn viterbi(series: &ObservationSeries, model: &PoissonHmm) -> StateSequence {
    let t_len = series.len();
    let k = model.num_states();
    let log_emit = emission_log_probs(series, model);
    let log_trans: Vec<f64> = model
        .transition_matrix()
        .iter()
        .flat_map(|row| row.iter().map(|&p| ln(p)))
        .collect();
    let log_init = -ln(k as f64);

    let mut score = vec![0.0; t_len * k];
    let mut back = vec![0usize; t_len * k];
    for s in 0..k {
        score[s] = log_init + log_emit[s];
    }
    for t in 1..t_len {
        for s in 0..k {
            let mut best_j = 0;
            let mut best = score[(t - 1) * k] + log_trans[s];
            for j in 1..k {
                let cand = score[(t - 1) * k + j] + log_trans[j * k + s];
                if cand > best {
                    best = cand;
                    best_j = j;
                }
            }
            score[t * k + s] = best + log_emit[t * k + s];
            back[t * k + s] = best_j;
        }
    }

    let mut states = vec![0usize; t_len];
    let mut current = argmax_lowest(&score[(t_len - 1) * k..]);
    states[t_len - 1] = current + 1;
    for t in (1..t_len).rev() {
        current = back[t * k + current];
        states[t - 1] = current + 1;
    }
    StateSequence::new(states, k).expect("backtrack indices are within [1, K]")
}

/// Index of the largest value; the first one wins on ties.
fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate;
    use chrono::NaiveDate;

    fn day0() -> NaiveDate {
        NaiveDate::from_ymd_opt(2023, 1, 1).unwrap()
    }

    fn series(counts: &[u64]) -> ObservationSeries {
        ObservationSeries::new(day0(), counts.to_vec()).unwrap()
    }

    #[test]
    fn single_state_likelihood_is_iid_sum() {
        // K=1: 2 * (2 ln 2 - 2 - ln 2)
        let model = PoissonHmm::new(vec![2.0], 0.95).unwrap();
        let ll = log_marginal_likelihood(&series(&[2, 2]), &model);
        assert!((ll - -2.6137056389).abs() < 1e-9);
    }

    #[test]
    fn single_day_two_state_closed_form() {
        // T=1, x=0: ln(0.5 e^{-1} + 0.5 e^{-3}), independent of p
        let expected = (0.5 * (-1.0f64).exp() + 0.5 * (-3.0f64).exp()).ln();
        for &p in &[0.1, 0.5, 0.95] {
            let model = PoissonHmm::new(vec![1.0, 3.0], p).unwrap();
            let ll = log_marginal_likelihood(&series(&[0]), &model);
            assert!((ll - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn single_state_marginals_are_one() {
        let model = PoissonHmm::new(vec![2.0], 0.95).unwrap();
        let marginals = posterior_marginals(&series(&[1, 5, 2]), &model);
        for row in marginals.rows() {
            assert_eq!(row, &[1.0]);
        }
    }

    #[test]
    fn single_day_posterior_by_bayes_rule() {
        // gamma[0] = e^{-1} / (e^{-1} + e^{-3})
        let model = PoissonHmm::new(vec![1.0, 3.0], 0.95).unwrap();
        let marginals = posterior_marginals(&series(&[0]), &model);
        let expected = (-1.0f64).exp() / ((-1.0f64).exp() + (-3.0f64).exp());
        assert!((marginals.row(0)[0] - expected).abs() < 1e-12);
        assert!((marginals.row(0)[0] - 0.8808).abs() < 1e-4);
        assert!((marginals.row(0)[1] - 0.1192).abs() < 1e-4);
    }

    #[test]
    fn map_states_argmax_and_tie_break() {
        let m = PosteriorMarginals {
            gamma: vec![0.1, 0.7, 0.2],
            num_days: 1,
            num_states: 3,
        };
        assert_eq!(map_states(&m).states(), &[2]);

        let tie = PosteriorMarginals {
            gamma: vec![0.5, 0.5],
            num_days: 1,
            num_states: 2,
        };
        assert_eq!(map_states(&tie).states(), &[1]);
    }

    #[test]
    fn map_states_single_state_is_all_ones() {
        let model = PoissonHmm::new(vec![2.0], 0.95).unwrap();
        let marginals = posterior_marginals(&series(&[1, 5, 2]), &model);
        assert_eq!(map_states(&marginals).states(), &[1, 1, 1]);
    }

    #[test]
    fn rate_path_is_a_lookup() {
        let model = PoissonHmm::new(vec![4.0, 9.0], 0.95).unwrap();
        let states = StateSequence::new(vec![1, 1, 2], 2).unwrap();
        assert_eq!(rate_path(&states, &model).unwrap(), vec![4.0, 4.0, 9.0]);

        let single = PoissonHmm::new(vec![4.0], 0.95).unwrap();
        let ones = StateSequence::new(vec![1, 1, 1], 1).unwrap();
        assert_eq!(rate_path(&ones, &single).unwrap(), vec![4.0, 4.0, 4.0]);
    }

    #[test]
    fn rate_path_rejects_out_of_range_state() {
        let model = PoissonHmm::new(vec![4.0], 0.95).unwrap();
        let states = StateSequence::new(vec![1, 2], 2).unwrap();
        assert!(rate_path(&states, &model).is_err());
    }

    #[test]
    fn viterbi_single_state_is_all_ones() {
        let model = PoissonHmm::new(vec![2.0], 0.95).unwrap();
        assert_eq!(viterbi(&series(&[1, 5, 2]), &model).states(), &[1, 1, 1]);
    }

    #[test]
    fn viterbi_matches_map_states_on_separated_regimes() {
        let model = PoissonHmm::new(vec![1.0, 1000.0], 0.95).unwrap();
        let (_, sim) = simulate(&model, 300, 5, day0()).unwrap();
        let marginals = posterior_marginals(&sim, &model);
        assert_eq!(viterbi(&sim, &model), map_states(&marginals));
    }

    #[test]
    fn decode_recovers_generating_rates() {
        // simulate-then-decode round trip on well-separated rates
        let model = PoissonHmm::new(vec![5.0, 100.0], 0.97).unwrap();
        let (truth, sim) = simulate(&model, 500, 21, day0()).unwrap();
        let marginals = posterior_marginals(&sim, &model);
        let decoded = map_states(&marginals);
        let true_rates = rate_path(&truth, &model).unwrap();
        let decoded_rates = rate_path(&decoded, &model).unwrap();
        let hits = true_rates
            .iter()
            .zip(&decoded_rates)
            .filter(|(a, b)| a == b)
            .count();
        assert!(hits as f64 >= 0.95 * true_rates.len() as f64);
    }

    #[test]
    fn no_nonfinite_for_extreme_counts_and_rates() {
        let model = PoissonHmm::new(vec![crate::RATE_FLOOR, 1e6], 0.95).unwrap();
        let s = series(&[0, 1_000_000, 3, 1_000_000]);
        let ll = log_marginal_likelihood(&s, &model);
        assert!(ll.is_finite());
        let marginals = posterior_marginals(&s, &model);
        for row in marginals.rows() {
            assert!(row.iter().all(|v| v.is_finite()));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
