//! Error metrics over `K x r` estimate and truth matrices (row-major).

use crate::error::{Error, Result};

fn check(estimates: &[f64], truth: &[f64], r: usize) -> Result<usize> {
    if r == 0 || estimates.len() != truth.len() || estimates.len() % r != 0 || estimates.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: estimates.len(),
        });
    }
    Ok(estimates.len() / r)
}

/// `sqrt( sum_k |xhat_k - x_k|^2 / (K r) )`.
pub fn rmse(estimates: &[f64], truth: &[f64], r: usize) -> Result<f64> {
    let k = check(estimates, truth, r)?;
    let ss: f64 = estimates.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / (k * r) as f64).sqrt())
}

/// `(1/K) sum_k sqrt( |xhat_k - x_k|^2 / r )`.
pub fn mean_error(estimates: &[f64], truth: &[f64], r: usize) -> Result<f64> {
    let k = check(estimates, truth, r)?;
    let total: f64 = estimates
        .chunks_exact(r)
        .zip(truth.chunks_exact(r))
        .map(|(e, t)| {
            let ss: f64 = e.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
            (ss / r as f64).sqrt()
        })
        .sum();
    Ok(total / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_estimates_score_zero() {
        let t = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(rmse(&t, &t, 2).unwrap(), 0.0);
        assert_eq!(mean_error(&t, &t, 2).unwrap(), 0.0);
    }

    #[test]
    fn constant_error_collapses() {
        let t = vec![0.5; 12];
        let e: Vec<f64> = t.iter().map(|v| v - 0.3).collect();
        assert!((rmse(&e, &t, 3).unwrap() - 0.3).abs() < 1e-15);
        assert!((mean_error(&e, &t, 3).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn hand_values() {
        let e = [3.0, 4.0];
        let t = [0.0, 0.0];
        assert!((rmse(&e, &t, 1).unwrap() - (12.5f64).sqrt()).abs() < 1e-15);
        assert!((mean_error(&e, &t, 1).unwrap() - 3.5).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        assert!(rmse(&[1.0, 2.0], &[1.0], 1).is_err());
        assert!(mean_error(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 2).is_err());
    }

    proptest! {
        #[test]
        fn me_never_exceeds_rmse(
            r in 1usize..5,
            rows in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 8), 1..20),
        ) {
            let k = rows.len();
            let e: Vec<f64> = rows.iter().flat_map(|row| row[..r].to_vec()).collect();
            let t = vec![0.0; k * r];
            let a = rmse(&e, &t, r).unwrap();
            let b = mean_error(&e, &t, r).unwrap();
            prop_assert!(a >= b - 1e-12 * a.max(1.0));
        }
    }
}
