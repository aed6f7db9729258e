use std::sync::Arc;

use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex64;

use super::{DynamicsModel, NoiseCoeff};

/// Upper-bidiagonal `A` (diagonal -0.5, superdiagonal 0.1) and `A1`
/// (diagonal -0.3, superdiagonal 0.3).
pub fn cubic_matrices(r: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let bidiag = |d: f64, s: f64| {
        DMatrix::from_fn(r, r, |i, j| {
            if i == j {
                d
            } else if j == i + 1 {
                s
            } else {
                0.0
            }
        })
    };
    (bidiag(-0.5, 0.1), bidiag(-0.3, 0.3))
}

/// `(M x)_k` for an upper-bidiagonal `M` with constant diagonal and superdiagonal.
fn bidiag_row<T: ComplexField<RealField = f64> + Copy>(x: &[T], k: usize, d: f64, s: f64) -> T {
    let mut v = x[k] * T::from_real(d);
    if k + 1 < x.len() {
        v += x[k + 1] * T::from_real(s);
    }
    v
}

fn cubic_drift<T: ComplexField<RealField = f64> + Copy>(x: &[T], out: &mut [T]) {
    let two = T::from_real(2.0);
    for (k, o) in out.iter_mut().enumerate() {
        let ax = bidiag_row(x, k, -0.5, 0.1);
        let a1x = bidiag_row(x, k, -0.3, 0.3);
        *o = x[k].sin() * ax + (two * x[k]).sin() * a1x;
    }
}

fn cubic_obs<T: ComplexField<RealField = f64> + Copy>(x: &[T], out: &mut [T]) {
    for (o, &xi) in out.iter_mut().zip(x) {
        let d = xi - T::from_real(100.0);
        *o = d * d * d;
    }
}

fn cubic_div(x: &[f64]) -> f64 {
    (0..x.len())
        .map(|k| {
            let ax = bidiag_row(x, k, -0.5, 0.1);
            let a1x = bidiag_row(x, k, -0.3, 0.3);
            let (s, c) = x[k].sin_cos();
            let (s2, c2) = (2.0 * x[k]).sin_cos();
            c * ax - 0.5 * s + 2.0 * c2 * a1x - 0.3 * s2
        })
        .sum()
}

/// Cubic sensor: `f(x) = sin(x) * (A x) + sin(2x) * (A1 x)`, `h(x) = (x - 100)^3`,
/// unit noises, `m = r`.
pub fn make_cubic_sensor(r: usize) -> DynamicsModel {
    DynamicsModel::new(
        "cubic_sensor",
        r,
        r,
        Arc::new(cubic_drift::<f64>),
        Arc::new(cubic_obs::<f64>),
    )
    .expect("r >= 1")
    .with_complex_drift(Arc::new(cubic_drift::<Complex64>))
    .with_complex_obs(Arc::new(cubic_obs::<Complex64>))
    .with_analytic_div(Arc::new(cubic_div))
}

fn scaled_cubic_drift<T: ComplexField<RealField = f64> + Copy>(x: &[T], out: &mut [T]) {
    out[0] = -x[0];
}

fn scaled_cubic_obs<T: ComplexField<RealField = f64> + Copy>(x: &[T], out: &mut [T]) {
    out[0] = T::from_real(1000.0) * x[0] * x[0] * x[0];
}

/// `f(x) = -x`, `h(x) = 1000 x^3`, unit noises, scalar.
pub fn make_scaled_cubic_1d() -> DynamicsModel {
    DynamicsModel::new(
        "scaled_cubic_1d",
        1,
        1,
        Arc::new(scaled_cubic_drift::<f64>),
        Arc::new(scaled_cubic_obs::<f64>),
    )
    .expect("valid dims")
    .with_complex_drift(Arc::new(scaled_cubic_drift::<Complex64>))
    .with_complex_obs(Arc::new(scaled_cubic_obs::<Complex64>))
    .with_analytic_div(Arc::new(|_| -1.0))
}

fn double_well_drift<T: ComplexField<RealField = f64> + Copy>(x: &[T], out: &mut [T]) {
    let x = x[0];
    out[0] = T::from_real(-4.0) * x * (x * x - T::one());
}

fn square_obs<T: ComplexField<RealField = f64> + Copy>(x: &[T], out: &mut [T]) {
    out[0] = x[0] * x[0];
}

/// `f(x) = -4x(x^2 - 1)`, `h(x) = x^2`, `U = 0.5`, `V = 0.2`.
pub fn make_double_well() -> DynamicsModel {
    DynamicsModel::new(
        "double_well",
        1,
        1,
        Arc::new(double_well_drift::<f64>),
        Arc::new(square_obs::<f64>),
    )
    .expect("valid dims")
    .with_complex_drift(Arc::new(double_well_drift::<Complex64>))
    .with_complex_obs(Arc::new(square_obs::<Complex64>))
    .with_analytic_div(Arc::new(|x: &[f64]| -12.0 * x[0] * x[0] + 4.0))
    .with_state_noise(NoiseCoeff::Constant(DMatrix::from_element(1, 1, 0.5)))
    .expect("1x1")
    .with_obs_noise(NoiseCoeff::Constant(DMatrix::from_element(1, 1, 0.2)))
    .expect("1x1")
}

fn linear_drift<T: ComplexField<RealField = f64> + Copy>(x: &[T], out: &mut [T]) {
    for (k, o) in out.iter_mut().enumerate() {
        *o = bidiag_row(x, k, -0.5, 0.1);
    }
}

fn linear_obs<T: ComplexField<RealField = f64> + Copy>(x: &[T], out: &mut [T]) {
    for (o, &xi) in out.iter_mut().zip(x) {
        *o = T::from_real(5.0) * xi;
    }
}

/// `f(x) = A x` with the cubic-sensor `A`, `h(x) = 5 x`, unit noises.
pub fn make_linear(r: usize) -> DynamicsModel {
    let (a, _) = cubic_matrices(r);
    let h = DMatrix::identity(r, r) * 5.0;
    let div = -0.5 * r as f64;
    DynamicsModel::new(
        "linear",
        r,
        r,
        Arc::new(linear_drift::<f64>),
        Arc::new(linear_obs::<f64>),
    )
    .expect("r >= 1")
    .with_complex_drift(Arc::new(linear_drift::<Complex64>))
    .with_complex_obs(Arc::new(linear_obs::<Complex64>))
    .with_analytic_div(Arc::new(move |_| div))
    .with_linear_structure(a, h)
    .expect("shapes match")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::divergence_central_diff;
    use rand::Rng;

    #[test]
    fn cubic_matrices_r2() {
        let (a, a1) = cubic_matrices(2);
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[-0.5, 0.1, 0.0, -0.5]));
        assert_eq!(a1, DMatrix::from_row_slice(2, 2, &[-0.3, 0.3, 0.0, -0.3]));
    }

    #[test]
    fn cubic_drift_vanishes_at_origin() {
        let m = make_cubic_sensor(4);
        assert_eq!(m.drift_vec(&[0.0; 4]), vec![0.0; 4]);
    }

    #[test]
    fn cubic_drift_matches_matrix_form() {
        let r = 5;
        let m = make_cubic_sensor(r);
        let (a, a1) = cubic_matrices(r);
        let x = nalgebra::DVector::from_fn(r, |i, _| 0.3 * i as f64 - 0.7);
        let ax = &a * &x;
        let a1x = &a1 * &x;
        let f = m.drift_vec(x.as_slice());
        for k in 0..r {
            let want = x[k].sin() * ax[k] + (2.0 * x[k]).sin() * a1x[k];
            assert!((f[k] - want).abs() < 1e-15);
        }
        let h = m.obs_vec(x.as_slice());
        assert!((h[2] - (x[2] - 100.0).powi(3)).abs() < 1e-9);
    }

    #[test]
    fn cubic_div_matches_central_difference() {
        let mut rng = crate::rng::stream_rng_raw(1, 0, 77);
        for r in [1usize, 2, 7] {
            let m = make_cubic_sensor(r);
            for _ in 0..10 {
                let x: Vec<f64> = (0..r).map(|_| rng.random_range(-3.0..3.0)).collect();
                let cd = divergence_central_diff(&m, &x, 1e-6).unwrap();
                assert!((m.analytic_div(&x).unwrap() - cd).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn scaled_cubic_values() {
        let m = make_scaled_cubic_1d();
        assert!((m.obs_vec(&[0.1])[0] - 1.0).abs() < 1e-12);
        assert_eq!(m.drift_vec(&[0.5]), vec![-0.5]);
        assert_eq!(m.analytic_div(&[3.0]), Some(-1.0));
    }

    #[test]
    fn double_well_equilibria_and_noise() {
        let m = make_double_well();
        for x in [-1.0, 0.0, 1.0] {
            assert_eq!(m.drift_vec(&[x])[0], 0.0);
        }
        assert_eq!(m.diffusion(&[0.0])[(0, 0)], 0.25);
        assert!((m.obs_covariance(&[0.0])[(0, 0)] - 0.04).abs() < 1e-17);
        assert_eq!(m.analytic_div(&[2.0]), Some(-44.0));
    }

    #[test]
    fn linear_model() {
        let m = make_linear(1);
        assert_eq!(m.drift_vec(&[2.0]), vec![-1.0]);
        assert_eq!(m.obs_vec(&[2.0]), vec![10.0]);
        let m2 = make_linear(2);
        assert_eq!(m2.drift_vec(&[1.0, 0.0]), vec![-0.5, 0.0]);
        assert_eq!(m2.analytic_div(&[5.0, 1.0]), Some(-1.0));
        assert!(m2.linear().is_some());
    }
}
