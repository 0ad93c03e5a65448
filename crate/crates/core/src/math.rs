//! Log-space helpers on top of `libm` (the crate is `no_std`).

/// `log(Σ exp(x_i))` with the usual max-shift for stability.
pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        // all -inf (empty sums), or a +inf/NaN input propagates
        return max;
    }
    let sum: f64 = values.iter().map(|&v| libm::exp(v - max)).sum();
    max + libm::log(sum)
}

pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

/// `ln Γ(x)`; used for the `ln(x!)` term of the Poisson pmf.
pub(crate) fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}
