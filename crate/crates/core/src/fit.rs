//! Empirical-Bayes rate estimation and selection of the number of states.
//!
//! For fixed `K` the rates maximizing the latent-path-marginalized
//! likelihood are found by EM: the E-step is the forward-backward posterior,
//! the M-step the responsibility-weighted count mean per state. The
//! selection statistic per `K` is that optimum's log-likelihood itself (no
//! penalty term), so the per-`K` curve can be inspected directly.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::inference::forward_backward;
use crate::model::{PoissonHmm, RATE_FLOOR};
use crate::series::ObservationSeries;
use crate::{Error, Result};

/// Optimization controls for [`em_fit`] and [`select_num_states`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Hard cap on EM iterations per restart.
    pub max_iters: usize,
    /// Relative log-likelihood improvement below which a restart has
    /// converged.
    pub rel_tol: f64,
    /// Number of independent EM runs per fit; the best final likelihood
    /// wins.
    pub restarts: usize,
    /// Seed for the restart-initialization jitter.
    pub seed: u64,
    /// Shared stay probability; fixed, not learned.
    pub stay_prob: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            rel_tol: 1e-8,
            restarts: 20,
            seed: 0,
            stay_prob: 0.95,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::InvalidFitConfig {
                reason: "max_iters must be at least 1",
            });
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidFitConfig {
                reason: "rel_tol must be positive",
            });
        }
        if self.restarts < 1 {
            return Err(Error::InvalidFitConfig {
                reason: "restarts must be at least 1",
            });
        }
        Ok(())
    }
}

/// Outcome of one [`em_fit`] call: the best model over all restarts, with
/// per-restart provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Fitted model; rates canonicalized to ascending order.
    pub model: PoissonHmm,
    /// The latent-path-marginalized log-likelihood at the optimum.
    pub final_log_likelihood: f64,
    /// Per-iteration log-likelihood of the winning restart (non-decreasing
    /// up to 1e-9 slack).
    pub ll_trace: Vec<f64>,
    /// Whether the winning restart converged before `max_iters`.
    pub converged: bool,
    /// Index of the winning restart.
    pub best_restart: usize,
    /// Per-iteration log-likelihoods of every restart, by restart index.
    pub restart_traces: Vec<Vec<f64>>,
}

/// One candidate in a [`ModelSelectionReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCandidate {
    pub num_states: usize,
    /// The type-II maximum-likelihood approximation to the log marginal
    /// likelihood for this state count.
    pub approx_log_marginal: f64,
    pub fit: FitResult,
}

/// Per-`K` fits plus the selected state count.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSelectionReport {
    /// One entry per `K = 1..=K_max`, in order.
    pub candidates: Vec<ModelCandidate>,
    /// Argmax of `approx_log_marginal`; ties within 1e-9 go to the smallest
    /// `K`.
    pub selected_num_states: usize,
}

/// Fit the rate vector for a fixed number of states by EM with random
/// restarts. Deterministic for a fixed config.
pub fn em_fit(series: &ObservationSeries, num_states: usize, config: &FitConfig) -> Result<FitResult> {
    em_fit_keyed(series, num_states, config, num_states as u64)
}

/// Inner fit with an explicit RNG stream key, so per-`K` fits inside a
/// selection sweep draw independent jitter from one seed.
fn em_fit_keyed(
    series: &ObservationSeries,
    num_states: usize,
    config: &FitConfig,
    stream_key: u64,
) -> Result<FitResult> {
    if num_states < 1 {
        return Err(Error::InvalidStateCount { num_states });
    }
    config.validate()?;
    if num_states >= 2 && !(config.stay_prob > 0.0 && config.stay_prob < 1.0) {
        return Err(Error::InvalidStayProb {
            stay_prob: config.stay_prob,
        });
    }

    let base_rates = quantile_init(series.counts(), num_states);

    let mut best: Option<(usize, RestartOutcome)> = None;
    let mut restart_traces = Vec::with_capacity(config.restarts);
    for restart in 0..config.restarts {
        let init = if restart == 0 {
            base_rates.clone()
        } else {
            jitter(&base_rates, config.seed, stream_key, restart)
        };
        let outcome = em_run(series, init, config);
        restart_traces.push(outcome.ll_trace.clone());
        let better = match &best {
            None => true,
            Some((_, incumbent)) => outcome.final_ll > incumbent.final_ll,
        };
        if better {
            best = Some((restart, outcome));
        }
    }
    let (best_restart, outcome) = best.expect("restarts >= 1");

    let mut rates = outcome.rates;
    rates.sort_by(|a, b| a.partial_cmp(b).expect("rates are finite"));
    Ok(FitResult {
        model: PoissonHmm::new(rates, config.stay_prob)?,
        final_log_likelihood: outcome.final_ll,
        ll_trace: outcome.ll_trace,
        converged: outcome.converged,
        best_restart,
        restart_traces,
    })
}

struct RestartOutcome {
    rates: Vec<f64>,
    final_ll: f64,
    ll_trace: Vec<f64>,
    converged: bool,
}

/// A restart only counts as converged once the last M-step moved no rate
/// by more than this relative amount. Likelihood improvement alone is a
/// poor stopping signal: near the optimum the likelihood is flat in the
/// rates, and stopping on it leaves M-step fixed-point residuals far above
/// the 1e-6 the reported rates must satisfy.
const M_STEP_STABILITY_TOL: f64 = 1e-7;

/// One EM run from a given initialization.
fn em_run(series: &ObservationSeries, init_rates: Vec<f64>, config: &FitConfig) -> RestartOutcome {
    let counts = series.counts();
    let mut model =
        PoissonHmm::new(init_rates, config.stay_prob).expect("initial rates are above the floor");
    let mut ll_trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut last_step_change = f64::INFINITY;

    for _ in 0..config.max_iters {
        let (marginals, ll) = forward_backward(series, &model);
        if let Some(&prev) = ll_trace.last() {
            let scale = prev.abs().max(1.0);
            if (ll - prev) / scale < config.rel_tol && last_step_change < M_STEP_STABILITY_TOL {
                ll_trace.push(ll);
                converged = true;
                break;
            }
        }
        ll_trace.push(ll);

        // M-step: responsibility-weighted count mean per state.
        let k = model.num_states();
        let mut mass = vec![0.0; k];
        let mut weighted = vec![0.0; k];
        for (t, row) in marginals.rows().enumerate() {
            let x = counts[t] as f64;
            for s in 0..k {
                mass[s] += row[s];
                weighted[s] += row[s] * x;
            }
        }
        let new_rates: Vec<f64> = (0..k)
            .map(|s| {
                if mass[s] == 0.0 {
                    // starved state: keep its previous rate
                    model.rates()[s]
                } else {
                    (weighted[s] / mass[s]).max(RATE_FLOOR)
                }
            })
            .collect();
        last_step_change = new_rates
            .iter()
            .zip(model.rates())
            .map(|(new, old)| (new - old).abs() / old.abs().max(RATE_FLOOR))
            .fold(0.0, f64::max);
        model = PoissonHmm::new(new_rates, config.stay_prob).expect("rates clamped to the floor");
    }

    let final_ll = *ll_trace.last().expect("max_iters >= 1");
    RestartOutcome {
        rates: model.rates().to_vec(),
        final_ll,
        ll_trace,
        converged,
    }
}

/// Restart-0 initialization: the `(k - 0.5) / K` quantiles of the observed
/// counts, clamped to the rate floor.
fn quantile_init(counts: &[u64], num_states: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("counts are finite"));
    (1..=num_states)
        .map(|k| {
            let q = (k as f64 - 0.5) / num_states as f64;
            quantile(&sorted, q).max(RATE_FLOOR)
        })
        .collect()
}

/// Linear-interpolation quantile of pre-sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Later restarts multiply each base rate by `exp(g)`, `g` standard normal
/// from a seeded generator keyed by (seed, stream, restart).
fn jitter(base: &[f64], seed: u64, stream_key: u64, restart: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stream_key << 32) | restart as u64);
    base.iter()
        .map(|&r| {
            let g: f64 = StandardNormal.sample(&mut rng);
            (r * libm::exp(g)).max(RATE_FLOOR)
        })
        .collect()
}

/// Fit every state count `1..=max_states` and pick the one with the highest
/// approximate log marginal likelihood.
pub fn select_num_states(
    series: &ObservationSeries,
    max_states: usize,
    config: &FitConfig,
) -> Result<ModelSelectionReport> {
    if max_states < 1 || max_states > 64 {
        return Err(Error::InvalidStateCount {
            num_states: max_states,
        });
    }
    let mut candidates = Vec::with_capacity(max_states);
    for k in 1..=max_states {
        let fit = em_fit_keyed(series, k, config, k as u64)?;
        candidates.push(ModelCandidate {
            num_states: k,
            approx_log_marginal: fit.final_log_likelihood,
            fit,
        });
    }
    // argmax; a later K must beat the incumbent by more than 1e-9
    let mut selected = 0;
    for (i, cand) in candidates.iter().enumerate().skip(1) {
        if cand.approx_log_marginal > candidates[selected].approx_log_marginal + 1e-9 {
            selected = i;
        }
    }
    Ok(ModelSelectionReport {
        selected_num_states: candidates[selected].num_states,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{posterior_marginals, simulate};
    use chrono::NaiveDate;

    fn day0() -> NaiveDate {
        NaiveDate::from_ymd_opt(2022, 10, 1).unwrap()
    }

    fn series(counts: &[u64]) -> ObservationSeries {
        ObservationSeries::new(day0(), counts.to_vec()).unwrap()
    }

    #[test]
    fn single_state_fit_is_sample_mean() {
        let s = series(&[3, 8, 0, 5, 4, 13, 2]);
        let fit = em_fit(&s, 1, &FitConfig::default()).unwrap();
        assert!((fit.model.rates()[0] - s.mean()).abs() < 1e-9);
        assert!(fit.converged);
        // closed-form M-step: at most 2 updates before the likelihood stalls
        assert!(fit.ll_trace.len() <= 3);
    }

    #[test]
    fn recovers_two_state_rates() {
        let truth = PoissonHmm::new(vec![5.0, 50.0], 0.95).unwrap();
        let (_, sim) = simulate(&truth, 1000, 17, day0()).unwrap();
        let fit = em_fit(&sim, 2, &FitConfig::default()).unwrap();
        let rates = fit.model.rates();
        assert!((rates[0] - 5.0).abs() / 5.0 < 0.10, "low rate {}", rates[0]);
        assert!((rates[1] - 50.0).abs() / 50.0 < 0.10, "high rate {}", rates[1]);
    }

    #[test]
    fn traces_are_monotone_within_slack() {
        let truth = PoissonHmm::new(vec![3.0, 20.0], 0.9).unwrap();
        let (_, sim) = simulate(&truth, 300, 2, day0()).unwrap();
        let fit = em_fit(&sim, 3, &FitConfig::default()).unwrap();
        for trace in &fit.restart_traces {
            for w in trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "trace decreased: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn rates_are_canonically_sorted() {
        let truth = PoissonHmm::new(vec![4.0, 40.0, 400.0], 0.95).unwrap();
        let (_, sim) = simulate(&truth, 400, 9, day0()).unwrap();
        let fit = em_fit(&sim, 3, &FitConfig::default()).unwrap();
        let rates = fit.model.rates();
        assert!(rates.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn mstep_fixed_point_at_convergence() {
        let truth = PoissonHmm::new(vec![5.0, 50.0], 0.95).unwrap();
        let (_, sim) = simulate(&truth, 500, 4, day0()).unwrap();
        let fit = em_fit(&sim, 2, &FitConfig::default()).unwrap();
        assert!(fit.converged);
        let marginals = posterior_marginals(&sim, &fit.model);
        for s in 0..2 {
            let mass: f64 = marginals.rows().map(|r| r[s]).sum();
            let weighted: f64 = marginals
                .rows()
                .zip(sim.counts())
                .map(|(r, &x)| r[s] * x as f64)
                .sum();
            let refit = weighted / mass;
            let rate = fit.model.rates()[s];
            assert!((refit - rate).abs() / rate < 1e-6);
        }
    }

    #[test]
    fn fit_is_deterministic_for_fixed_seed() {
        let truth = PoissonHmm::new(vec![5.0, 50.0], 0.95).unwrap();
        let (_, sim) = simulate(&truth, 200, 6, day0()).unwrap();
        let config = FitConfig {
            restarts: 5,
            ..FitConfig::default()
        };
        let a = em_fit(&sim, 2, &config).unwrap();
        let b = em_fit(&sim, 2, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_series_fits_the_constant_for_every_k() {
        let s = series(&[7; 200]);
        let config = FitConfig {
            restarts: 3,
            ..FitConfig::default()
        };
        for k in 1..=4 {
            let fit = em_fit(&s, k, &config).unwrap();
            for &rate in fit.model.rates() {
                assert!((rate - 7.0).abs() < 1e-3, "K={k}, rate {rate}");
            }
        }
    }

    #[test]
    fn degenerate_selection_sweep() {
        let s = series(&[1, 2, 3, 2, 1]);
        let report = select_num_states(&s, 1, &FitConfig::default()).unwrap();
        assert_eq!(report.selected_num_states, 1);
        assert_eq!(report.candidates.len(), 1);
    }

    #[test]
    fn selection_rejects_out_of_range_k_max() {
        let s = series(&[1, 2]);
        assert!(select_num_states(&s, 0, &FitConfig::default()).is_err());
        assert!(select_num_states(&s, 65, &FitConfig::default()).is_err());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let s = series(&[1, 2]);
        let bad = FitConfig {
            restarts: 0,
            ..FitConfig::default()
        };
        assert!(matches!(
            em_fit(&s, 1, &bad),
            Err(Error::InvalidFitConfig { .. })
        ));
        let bad_p = FitConfig {
            stay_prob: 1.0,
            ..FitConfig::default()
        };
        assert!(matches!(
            em_fit(&s, 2, &bad_p),
            Err(Error::InvalidStayProb { .. })
        ));
    }
}
