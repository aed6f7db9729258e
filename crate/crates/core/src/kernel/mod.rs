//! Short-time kernel approximation of the forward propagator and the
//! assembled transition operator on a point set.
//!
//! For identity state noise the base kernel is
//!
//! ```text
//! log K_dt(x, y) = -(r/2) log(2 pi dt) - |y - x|^2 / (2 dt) - (y - x) . f(x)
//!                  - dt (div f(x) + |f(x)|^2 / 2)
//! ```
//!
//! With `a = U U^T` the norms become `a^+`-weighted, the linear term uses
//! `a^+ f`, and the normalising constant gains `sqrt(det_+ a)`.
//! Order `N` combines `N` kernels at `dt / s_j` plus an identity term.

mod cache;
mod operator;

pub use cache::{load_operator, operator_cache_path, save_operator, CacheHeader};
pub use operator::{
    apply_operator, apply_operator_into, assemble_operator, assemble_operator_with, DistanceCache,
    SignedLogVec, TransitionOperator, DEFAULT_BOUNDARY_TOL,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::DynamicsModel;

/// Order, time-scale ratios and error exponents of a multi-scale kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub order: usize,
    pub scales: Vec<f64>,
    pub exponents: Vec<f64>,
    pub dt: f64,
}

impl KernelSpec {
    /// Default ladder: `s_j = 2^(j-1)`, `mu_k = 1 + k/2` (3/2, 2, 5/2, ...).
    pub fn new(order: usize, dt: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidSpec("order must be >= 1".into()));
        }
        let scales = (0..order).map(|j| 2f64.powi(j as i32)).collect();
        let exponents = (1..order).map(|k| 1.0 + k as f64 / 2.0).collect();
        Self::custom(scales, exponents, dt)
    }

    pub fn custom(scales: Vec<f64>, exponents: Vec<f64>, dt: f64) -> Result<Self> {
        let spec = Self {
            order: scales.len(),
            scales,
            exponents,
            dt,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.order == 0 || self.scales.len() != self.order {
            return bad(format!(
                "order {} needs exactly that many scales (got {})",
                self.order,
                self.scales.len()
            ));
        }
        if self.exponents.len() + 1 != self.order {
            return bad(format!(
                "order {} needs {} exponents (got {})",
                self.order,
                self.order - 1,
                self.exponents.len()
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return bad("scales must be positive and finite".into());
        }
        for (i, a) in self.scales.iter().enumerate() {
            if self.scales[..i].contains(a) {
                return bad(format!("duplicate scale {a}"));
            }
        }
        if self.exponents.iter().any(|&mu| !(mu > 1.0 && mu.is_finite())) {
            return bad("exponents must exceed 1".into());
        }
        if self.exponents.windows(2).any(|w| w[1] <= w[0]) {
            return bad("exponents must be strictly increasing".into());
        }
        Ok(())
    }

    /// Sub-steps `dt / s_j`.
    pub fn sub_steps(&self) -> Vec<f64> {
        self.scales.iter().map(|s| self.dt / s).collect()
    }
}

/// The generalized Vandermonde system `V c = d` for the combination weights.
pub fn vandermonde_system(spec: &KernelSpec) -> (DMatrix<f64>, DVector<f64>) {
    let n = spec.order;
    let mut v = DMatrix::zeros(n + 1, n + 1);
    let mut d = DVector::zeros(n + 1);
    for j in 0..=n {
        v[(0, j)] = 1.0;
    }
    for j in 0..n {
        v[(1, j)] = 1.0 / spec.scales[j];
        for (k, mu) in spec.exponents.iter().enumerate() {
            v[(2 + k, j)] = spec.scales[j].powf(-mu);
        }
    }
    d[0] = 1.0;
    d[1] = 1.0;
    (v, d)
}

/// Combination weights `c_1 .. c_N` followed by the identity weight `c_{N+1}`.
pub fn highorder_coeffs(spec: &KernelSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let (v, d) = vandermonde_system(spec);
    let c = v
        .clone()
        .lu()
        .solve(&d)
        .ok_or_else(|| Error::InvalidSpec("singular Vandermonde system".into()))?;
    let residual = (&v * &c - &d).amax();
    if !(residual <= 1e-10) || c.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidSpec(format!(
            "Vandermonde system is ill-conditioned (residual {residual:e})"
        )));
    }
    Ok(c.iter().copied().collect())
}

/// Moore-Penrose pseudoinverse of a symmetric PSD matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoInverse {
    pub pinv: DMatrix<f64>,
    /// Product of the retained eigenvalues.
    pub det_plus: f64,
    pub rank: usize,
    /// `W` with `W^T W = pinv`, shape `rank x r`.
    pub whitening: DMatrix<f64>,
}

/// Eigenvalues at or below `tol` (default `1e-12 * lambda_max`) count as zero.
pub fn pseudoinverse_spd(a: &DMatrix<f64>, tol: Option<f64>) -> Result<PseudoInverse> {
    let r = a.nrows();
    if a.ncols() != r || r == 0 {
        return Err(Error::InvalidInput("pseudoinverse needs a square matrix".into()));
    }
    let scale = a.amax().max(1.0);
    if (a - a.transpose()).amax() > 1e-10 * scale {
        return Err(Error::InvalidInput("matrix is not symmetric".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEvaluation { what: "noise covariance" });
    }
    let eig = a.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.max().max(0.0);
    let tol = tol.unwrap_or(1e-12 * lmax);
    let mut pinv = DMatrix::zeros(r, r);
    let mut det_plus = 1.0;
    let mut rows = Vec::new();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > tol {
            let u = eig.eigenvectors.column(k);
            pinv += (&u * u.transpose()) / lambda;
            det_plus *= lambda;
            rows.push(u.transpose() / lambda.sqrt());
        }
    }
    let rank = rows.len();
    let whitening = if rank == 0 {
        DMatrix::zeros(0, r)
    } else {
        DMatrix::from_rows(&rows)
    };
    Ok(PseudoInverse {
        pinv,
        det_plus,
        rank,
        whitening,
    })
}

/// Natural log of the base kernel `K_dt(x, y)` for the model's noise.
///
/// Straight evaluation of the formula; assembly uses a fused equivalent.
pub fn base_kernel_log(model: &DynamicsModel, x: &[f64], y: &[f64], dt: f64, div_fx: f64) -> Result<f64> {
    let r = model.r();
    if x.len() != r || y.len() != r {
        return Err(Error::DimensionMismatch {
            expected: r,
            got: if x.len() != r { x.len() } else { y.len() },
        });
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let f = DVector::from_vec(model.drift_vec(x));
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEvaluation { what: "drift" });
    }
    let dx = DVector::from_fn(r, |i, _| y[i] - x[i]);
    let log_two_pi_dt = (2.0 * std::f64::consts::PI * dt).ln();
    let (weight, log_det) = match model.state_noise() {
        None => (DMatrix::identity(r, r), 0.0),
        Some(_) => {
            let p = pseudoinverse_spd(&model.diffusion(x), None)?;
            (p.pinv, p.det_plus.ln())
        }
    };
    let af = &weight * &f;
    let quad = dx.dot(&(&weight * &dx));
    Ok(-0.5 * r as f64 * log_two_pi_dt - 0.5 * log_det - quad / (2.0 * dt) - dx.dot(&af)
        - dt * (div_fx + 0.5 * f.dot(&af)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_double_well, make_linear, DynamicsModel, NoiseCoeff, RealFn};
    use std::sync::Arc;

    fn zero_drift(r: usize) -> DynamicsModel {
        let f: RealFn = Arc::new(|_, out: &mut [f64]| out.fill(0.0));
        DynamicsModel::new("still", r, 1, f.clone(), f).unwrap()
    }

    #[test]
    fn first_order_coeffs() {
        let c = highorder_coeffs(&KernelSpec::new(1, 0.01).unwrap()).unwrap();
        assert_eq!(c, vec![1.0, 0.0]);
    }

    #[test]
    fn second_order_coeffs() {
        let c = highorder_coeffs(&KernelSpec::new(2, 0.01).unwrap()).unwrap();
        let s2 = 2f64.sqrt();
        let want = [-s2 - 1.0, 4.0 + 2.0 * s2, -2.0 - s2];
        for (a, b) in c.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{c:?}");
        }
    }

    #[test]
    fn coefficient_identities_hold() {
        for order in 1..=5 {
            let spec = KernelSpec::new(order, 0.01).unwrap();
            let c = highorder_coeffs(&spec).unwrap();
            assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            let inv: f64 = (0..order).map(|j| c[j] / spec.scales[j]).sum();
            assert!((inv - 1.0).abs() < 1e-10);
            for mu in &spec.exponents {
                let e: f64 = (0..order).map(|j| c[j] * spec.scales[j].powf(-mu)).sum();
                assert!(e.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(KernelSpec::custom(vec![1.0, 1.0], vec![1.5], 0.1).is_err());
        assert!(KernelSpec::custom(vec![1.0, 2.0, 3.0], vec![2.0, 1.5], 0.1).is_err());
        assert!(KernelSpec::custom(vec![1.0, 2.0], vec![0.5], 0.1).is_err());
        assert!(KernelSpec::custom(vec![1.0], vec![], 0.0).is_err());
        assert!(KernelSpec::new(0, 0.1).is_err());
    }

    #[test]
    fn pinv_of_identity_and_singular_diag() {
        let p = pseudoinverse_spd(&DMatrix::identity(3, 3), None).unwrap();
        assert_eq!(p.rank, 3);
        assert!((p.det_plus - 1.0).abs() < 1e-15);
        assert!((p.pinv - DMatrix::identity(3, 3)).amax() < 1e-15);

        let p = pseudoinverse_spd(&DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0])), None).unwrap();
        assert_eq!(p.rank, 1);
        assert!((p.det_plus - 2.0).abs() < 1e-15);
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.0]));
        assert!((&p.pinv - want).amax() < 1e-15);
        assert!((p.whitening.transpose() * &p.whitening - &p.pinv).amax() < 1e-15);
    }

    #[test]
    fn pinv_rejects_asymmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(pseudoinverse_spd(&a, None).is_err());
    }

    #[test]
    fn zero_drift_diagonal_is_normaliser() {
        let m = zero_drift(3);
        let x = [0.1, 0.2, 0.3];
        let l = base_kernel_log(&m, &x, &x, 0.01, 0.0).unwrap();
        assert!((l + 1.5 * (2.0 * std::f64::consts::PI * 0.01).ln()).abs() < 1e-14);
    }

    #[test]
    fn zero_drift_kernel_integrates_to_one() {
        let m = zero_drift(1);
        let dt: f64 = 0.01;
        let x = 0.3;
        let half = 10.0 * dt.sqrt();
        let n = 20_000;
        let h = 2.0 * half / n as f64;
        let mut sum = 0.0;
        for k in 0..=n {
            let y = x - half + k as f64 * h;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            sum += w * base_kernel_log(&m, &[x], &[y], dt, 0.0).unwrap().exp();
        }
        assert!((sum * h - 1.0).abs() < 1e-6);
    }

    #[test]
    fn double_well_kernel_matches_scalar_formula() {
        let m = make_double_well();
        let dt = 0.01;
        for &(x, y) in &[(0.2, 0.25), (-1.1, -0.9), (0.0, 0.3)] {
            let f = -4.0 * x * (x * x - 1.0);
            let div = -12.0 * x * x + 4.0;
            let a: f64 = 0.25;
            let want = -0.5 * (2.0 * std::f64::consts::PI * dt).ln() - 0.5 * a.ln()
                - (y - x) * (y - x) / (2.0 * dt * a)
                - (y - x) * f / a
                - dt * (div + 0.5 * f * f / a);
            let got = base_kernel_log(&m, &[x], &[y], dt, div).unwrap();
            assert!((got - want).abs() < 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn singular_noise_uses_pseudo_determinant() {
        let m = make_linear(2)
            .with_state_noise(NoiseCoeff::Constant(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0])))
            .unwrap();
        let x = [0.0, 0.0];
        let l = base_kernel_log(&m, &x, &x, 0.1, -1.0).unwrap();
        // a = diag(4, 0): det_+ = 4, f(0) = 0
        let want = -(2.0 * std::f64::consts::PI * 0.1).ln() - 0.5 * 4f64.ln() + 0.1;
        assert!((l - want).abs() < 1e-13);
    }
}
