//! Stochastic state-space models, trajectory simulation and drift divergence.
//!
//! A [`DynamicsModel`] describes
//!
//! ```text
//! dx = f(x) dt + U(x) dv,    dy = h(x) dt + V(x) dw
//! ```
//!
//! with `a = U U^T` and `b = V V^T`. Absent noise coefficients mean identity.

mod divergence;
mod presets;
mod simulate;

pub use divergence::{
    divergence, divergence_central_diff, divergence_complex_step, jacobian_drift, jacobian_obs,
    Divergence, DivergenceMethod, CENTRAL_DIFF_STEP, COMPLEX_STEP,
};
pub use presets::{
    cubic_matrices, make_cubic_sensor, make_double_well, make_linear, make_scaled_cubic_1d,
};
pub use simulate::{simulate, ObsEval, ObservationPath, SimulationConfig, Trajectory};
pub(crate) use simulate::apply_noise;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Vector field evaluated into a caller-provided output slice.
pub type RealFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// Same field evaluated at complex arguments (for complex-step derivatives).
pub type ComplexFn = Arc<dyn Fn(&[Complex64], &mut [Complex64]) + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Noise coefficient `U(x)` or `V(x)`.
#[derive(Clone)]
pub enum NoiseCoeff {
    Constant(DMatrix<f64>),
    StateDependent(MatrixFn),
}

impl NoiseCoeff {
    pub fn at(&self, x: &[f64]) -> DMatrix<f64> {
        match self {
            NoiseCoeff::Constant(m) => m.clone(),
            NoiseCoeff::StateDependent(f) => f(x),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, NoiseCoeff::Constant(_))
    }
}

/// `f = A x`, `h = H x`: enables the Kalman-Bucy baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearStructure {
    pub a: DMatrix<f64>,
    pub h: DMatrix<f64>,
}

#[derive(Clone)]
pub struct DynamicsModel {
    name: String,
    r: usize,
    m: usize,
    drift: RealFn,
    drift_complex: Option<ComplexFn>,
    obs: RealFn,
    obs_complex: Option<ComplexFn>,
    state_noise: Option<NoiseCoeff>,
    obs_noise: Option<NoiseCoeff>,
    analytic_div: Option<ScalarFn>,
    linear: Option<LinearStructure>,
}

impl fmt::Debug for DynamicsModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DynamicsModel")
            .field("name", &self.name)
            .field("r", &self.r)
            .field("m", &self.m)
            .field("complex_drift", &self.drift_complex.is_some())
            .field("state_noise", &self.state_noise.is_some())
            .field("obs_noise", &self.obs_noise.is_some())
            .field("analytic_div", &self.analytic_div.is_some())
            .field("linear", &self.linear.is_some())
            .finish()
    }
}

impl DynamicsModel {
    pub fn new(name: impl Into<String>, r: usize, m: usize, drift: RealFn, obs: RealFn) -> Result<Self> {
        if r == 0 || m == 0 {
            return Err(Error::InvalidModel(format!(
                "state and observation dimensions must be >= 1 (r={r}, m={m})"
            )));
        }
        Ok(Self {
            name: name.into(),
            r,
            m,
            drift,
            drift_complex: None,
            obs,
            obs_complex: None,
            state_noise: None,
            obs_noise: None,
            analytic_div: None,
            linear: None,
        })
    }

    pub fn with_complex_drift(mut self, f: ComplexFn) -> Self {
        self.drift_complex = Some(f);
        self
    }

    pub fn with_complex_obs(mut self, h: ComplexFn) -> Self {
        self.obs_complex = Some(h);
        self
    }

    pub fn with_analytic_div(mut self, div: ScalarFn) -> Self {
        self.analytic_div = Some(div);
        self
    }

    pub fn with_state_noise(mut self, u: NoiseCoeff) -> Result<Self> {
        check_noise_shape(&u, self.r, "state")?;
        self.state_noise = Some(u);
        Ok(self)
    }

    pub fn with_obs_noise(mut self, v: NoiseCoeff) -> Result<Self> {
        check_noise_shape(&v, self.m, "observation")?;
        self.obs_noise = Some(v);
        Ok(self)
    }

    pub fn with_linear_structure(mut self, a: DMatrix<f64>, h: DMatrix<f64>) -> Result<Self> {
        if a.shape() != (self.r, self.r) || h.shape() != (self.m, self.r) {
            return Err(Error::InvalidModel("linear structure has wrong shape".into()));
        }
        self.linear = Some(LinearStructure { a, h });
        Ok(self)
    }

    /// Drops the analytic divergence so numerical paths get exercised.
    pub fn without_analytic_div(mut self) -> Self {
        self.analytic_div = None;
        self
    }

    /// Drops the complex-argument drift (forces central-difference fallback).
    pub fn without_complex_drift(mut self) -> Self {
        self.drift_complex = None;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    pub fn drift_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.r];
        self.drift(x, &mut out);
        out
    }

    pub fn obs(&self, x: &[f64], out: &mut [f64]) {
        (self.obs)(x, out)
    }

    pub fn obs_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        self.obs(x, &mut out);
        out
    }

    pub fn drift_complex(&self) -> Option<&ComplexFn> {
        self.drift_complex.as_ref()
    }

    pub fn obs_complex(&self) -> Option<&ComplexFn> {
        self.obs_complex.as_ref()
    }

    pub fn analytic_div(&self, x: &[f64]) -> Option<f64> {
        self.analytic_div.as_ref().map(|d| d(x))
    }

    pub fn has_analytic_div(&self) -> bool {
        self.analytic_div.is_some()
    }

    pub fn state_noise(&self) -> Option<&NoiseCoeff> {
        self.state_noise.as_ref()
    }

    pub fn obs_noise(&self) -> Option<&NoiseCoeff> {
        self.obs_noise.as_ref()
    }

    pub fn linear(&self) -> Option<&LinearStructure> {
        self.linear.as_ref()
    }

    /// `a(x) = U(x) U(x)^T`; identity when no state noise is set.
    pub fn diffusion(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.state_noise {
            None => DMatrix::identity(self.r, self.r),
            Some(u) => {
                let u = u.at(x);
                &u * u.transpose()
            }
        }
    }

    /// `b(x) = V(x) V(x)^T`; identity when no observation noise is set.
    pub fn obs_covariance(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.obs_noise {
            None => DMatrix::identity(self.m, self.m),
            Some(v) => {
                let v = v.at(x);
                &v * v.transpose()
            }
        }
    }

    /// True when `a` does not depend on the state.
    pub fn diffusion_is_constant(&self) -> bool {
        self.state_noise.as_ref().is_none_or(NoiseCoeff::is_constant)
    }

    pub fn obs_covariance_is_constant(&self) -> bool {
        self.obs_noise.as_ref().is_none_or(NoiseCoeff::is_constant)
    }
}

fn check_noise_shape(c: &NoiseCoeff, dim: usize, which: &str) -> Result<()> {
    if let NoiseCoeff::Constant(m) = c {
        if m.nrows() != dim || m.ncols() != dim {
            return Err(Error::InvalidModel(format!(
                "{which} noise must be {dim}x{dim}, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    Ok(())
}
