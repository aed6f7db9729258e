use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{ComplexFn, DynamicsModel};
use crate::error::{Error, Result};

/// Default complex-step increment.
pub const COMPLEX_STEP: f64 = 1e-20;
/// Default central-difference increment.
pub const CENTRAL_DIFF_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceMethod {
    Analytic,
    ComplexStep,
    CentralDifference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Divergence {
    pub value: f64,
    pub method: DivergenceMethod,
    /// Set when complex-step was requested but the drift had no complex form.
    pub fell_back: bool,
}

/// `sum_k Im f_k(x + i h e_k) / h`, using `r` drift evaluations.
///
/// Falls back to central differences (with `fell_back` set) when the model
/// carries no complex-argument drift.
pub fn divergence_complex_step(model: &DynamicsModel, x: &[f64], h_step: f64) -> Result<Divergence> {
    check_args(model, x, h_step)?;
    let Some(fc) = model.drift_complex() else {
        return Ok(Divergence {
            value: divergence_central_diff(model, x, CENTRAL_DIFF_STEP)?,
            method: DivergenceMethod::CentralDifference,
            fell_back: true,
        });
    };
    let r = model.r();
    let mut z: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut out = vec![Complex64::new(0.0, 0.0); r];
    let mut sum = 0.0;
    for k in 0..r {
        z[k].im = h_step;
        fc(&z, &mut out);
        z[k].im = 0.0;
        sum += out[k].im / h_step;
    }
    finite(sum)?;
    Ok(Divergence {
        value: sum,
        method: DivergenceMethod::ComplexStep,
        fell_back: false,
    })
}

/// `sum_k [f_k(x + h e_k) - f_k(x - h e_k)] / (2h)`, using `2r` drift evaluations.
pub fn divergence_central_diff(model: &DynamicsModel, x: &[f64], h_step: f64) -> Result<f64> {
    check_args(model, x, h_step)?;
    let r = model.r();
    let mut xp = x.to_vec();
    let mut plus = vec![0.0; r];
    let mut minus = vec![0.0; r];
    let mut sum = 0.0;
    for k in 0..r {
        xp[k] = x[k] + h_step;
        model.drift(&xp, &mut plus);
        xp[k] = x[k] - h_step;
        model.drift(&xp, &mut minus);
        xp[k] = x[k];
        sum += (plus[k] - minus[k]) / (2.0 * h_step);
    }
    finite(sum)
}

/// Divergence by priority: analytic, then complex step, then central difference.
pub fn divergence(model: &DynamicsModel, x: &[f64]) -> Result<Divergence> {
    if let Some(v) = model.analytic_div(x) {
        finite(v)?;
        return Ok(Divergence {
            value: v,
            method: DivergenceMethod::Analytic,
            fell_back: false,
        });
    }
    divergence_complex_step(model, x, COMPLEX_STEP)
}

/// Jacobian of the drift, `J[i][j] = df_i/dx_j`.
pub fn jacobian_drift(model: &DynamicsModel, x: &[f64]) -> Result<DMatrix<f64>> {
    let r = model.r();
    jacobian(x, r, model.drift_complex(), |x, out| model.drift(x, out))
}

/// Jacobian of the observation function, `m x r`.
pub fn jacobian_obs(model: &DynamicsModel, x: &[f64]) -> Result<DMatrix<f64>> {
    let m = model.m();
    jacobian(x, m, model.obs_complex(), |x, out| model.obs(x, out))
}

fn jacobian(
    x: &[f64],
    rows: usize,
    complex: Option<&ComplexFn>,
    real: impl Fn(&[f64], &mut [f64]),
) -> Result<DMatrix<f64>> {
    let r = x.len();
    let mut jac = DMatrix::zeros(rows, r);
    match complex {
        Some(fc) => {
            let mut z: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            let mut out = vec![Complex64::new(0.0, 0.0); rows];
            for j in 0..r {
                z[j].im = COMPLEX_STEP;
                fc(&z, &mut out);
                z[j].im = 0.0;
                for i in 0..rows {
                    jac[(i, j)] = out[i].im / COMPLEX_STEP;
                }
            }
        }
        None => {
            let mut xp = x.to_vec();
            let mut plus = vec![0.0; rows];
            let mut minus = vec![0.0; rows];
            for j in 0..r {
                let h = CENTRAL_DIFF_STEP * x[j].abs().max(1.0);
                xp[j] = x[j] + h;
                real(&xp, &mut plus);
                xp[j] = x[j] - h;
                real(&xp, &mut minus);
                xp[j] = x[j];
                for i in 0..rows {
                    jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
                }
            }
        }
    }
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEvaluation { what: "jacobian" });
    }
    Ok(jac)
}

fn check_args(model: &DynamicsModel, x: &[f64], h_step: f64) -> Result<()> {
    if x.len() != model.r() {
        return Err(Error::DimensionMismatch {
            expected: model.r(),
            got: x.len(),
        });
    }
    if !(h_step > 0.0) {
        return Err(Error::InvalidInput(format!("step must be positive, got {h_step}")));
    }
    Ok(())
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteEvaluation { what: "divergence" })
    }
}
