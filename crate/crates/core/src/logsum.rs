//! Log-sum-exp helpers shared by the filter and the particle baseline.

/// `log(sum(exp(a_j)))` with the max-shift. Returns `-inf` when every entry
/// is `-inf` (or the slice is empty).
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Subtracts the log-sum-exp in place so that `sum(exp(values)) == 1`.
/// Returns the subtracted normaliser, or `None` if every entry is `-inf`.
pub fn normalize_log_weights(values: &mut [f64]) -> Option<f64> {
    let lse = log_sum_exp(values);
    if !lse.is_finite() {
        return None;
    }
    for v in values.iter_mut() {
        *v -= lse;
    }
    Some(lse)
}

/// Effective sample size `1 / sum(w^2)` of normalised log weights.
pub fn effective_sample_size(normalized_log_weights: &[f64]) -> f64 {
    let sum_sq: f64 = normalized_log_weights
        .iter()
        .map(|&lw| (2.0 * lw).exp())
        .sum();
    1.0 / sum_sq
}
