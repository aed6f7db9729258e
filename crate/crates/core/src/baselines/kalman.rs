use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::BaselineConfig;
use crate::error::{Error, Result};
use crate::filter::{check_run_inputs, Diagnostics, RunResult};
use crate::kernel::pseudoinverse_spd;
use crate::models::{jacobian_drift, jacobian_obs, DynamicsModel, ObservationPath, Trajectory};

/// Scaled unscented transform parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UkfParams {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

/// Mean and covariance of a Gaussian approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    fn initial(model: &DynamicsModel, truth: &Trajectory, cfg: &BaselineConfig) -> Result<Self> {
        let r = model.r();
        let mean = cfg.x0_guess.clone().unwrap_or_else(|| truth.initial().to_vec());
        if mean.len() != r {
            return Err(Error::DimensionMismatch {
                expected: r,
                got: mean.len(),
            });
        }
        Ok(Self {
            mean: DVector::from_vec(mean),
            cov: DMatrix::identity(r, r) * (cfg.init_std * cfg.init_std),
        })
    }
}

/// Linearised moments used by one continuous-discrete step.
struct Moments {
    /// Predicted drift `f` (EKF: at the mean, UKF: sigma-point average).
    f: DVector<f64>,
    h: DVector<f64>,
    /// `P F^T` (EKF) or the state-drift cross covariance (UKF).
    p_xf: DMatrix<f64>,
    /// `P H^T` or the state-observation cross covariance.
    p_xh: DMatrix<f64>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    /// Observation Jacobian for the discrete fallback.
    jac_h: DMatrix<f64>,
}

fn is_psd(p: &DMatrix<f64>) -> bool {
    if p.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let scale = p.amax().max(1.0);
    if (p - p.transpose()).amax() > 1e-8 * scale {
        return false;
    }
    p.clone().symmetric_eigen().eigenvalues.min() >= -1e-12 * scale
}

fn symmetrize(p: &mut DMatrix<f64>) {
    let t = p.transpose();
    *p += t;
    *p *= 0.5;
}

/// Euler step of the Kalman-Bucy equations with the given moments; falls back
/// to a discrete Joseph-form update when the Euler covariance leaves the PSD
/// cone (stiff observation gains).
fn kalman_bucy_update(
    belief: &mut GaussianBelief,
    mo: &Moments,
    dy: &DVector<f64>,
    dt: f64,
    diag: &mut Diagnostics,
) -> Result<()> {
    let beta = pseudoinverse_spd(&mo.b, None)?.pinv;
    let gain = &mo.p_xh * &beta;
    let innovation = dy - &mo.h * dt;
    let mean = &belief.mean + &mo.f * dt + &gain * &innovation;
    let mut cov = &belief.cov
        + (&mo.p_xf + mo.p_xf.transpose() + &mo.a - &gain * mo.p_xh.transpose()) * dt;
    symmetrize(&mut cov);
    if is_psd(&cov) && mean.iter().all(|v| v.is_finite()) {
        belief.mean = mean;
        belief.cov = cov;
        return Ok(());
    }
    diag.stiff_fallbacks += 1;
    let r = belief.mean.len();
    let mut prior = &belief.cov + (&mo.p_xf + mo.p_xf.transpose() + &mo.a) * dt;
    symmetrize(&mut prior);
    let prior_mean = &belief.mean + &mo.f * dt;
    let hd = &mo.jac_h * dt;
    let rd = &mo.b * dt;
    let s = &hd * &prior * hd.transpose() + &rd;
    let s_inv = s
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| s.try_inverse())
        .ok_or(Error::NonFiniteEvaluation { what: "innovation covariance" })?;
    let k = &prior * hd.transpose() * s_inv;
    belief.mean = prior_mean + &k * innovation;
    let ikh = DMatrix::identity(r, r) - &k * &hd;
    belief.cov = &ikh * prior * ikh.transpose() + &k * rd * k.transpose();
    symmetrize(&mut belief.cov);
    Ok(())
}

fn ekf_moments(model: &DynamicsModel, belief: &GaussianBelief) -> Result<Moments> {
    let x = belief.mean.as_slice();
    let jf = jacobian_drift(model, x)?;
    let jh = jacobian_obs(model, x)?;
    Ok(Moments {
        f: DVector::from_vec(model.drift_vec(x)),
        h: DVector::from_vec(model.obs_vec(x)),
        p_xf: &belief.cov * jf.transpose(),
        p_xh: &belief.cov * jh.transpose(),
        a: model.diffusion(x),
        b: model.obs_covariance(x),
        jac_h: jh,
    })
}

/// Matrix square root `S` with `S S^T = c P`, via Cholesky with one jittered retry.
fn sigma_factor(p: &DMatrix<f64>, c: f64) -> Option<DMatrix<f64>> {
    let scaled = p * c;
    scaled
        .clone()
        .cholesky()
        .or_else(|| (scaled + DMatrix::identity(p.nrows(), p.nrows()) * 1e-9).cholesky())
        .map(|ch| ch.l())
}

/// `(r + lambda, W_m0, W_c0, W_i)` of the scaled unscented transform.
fn sigma_weights(r: usize, params: &UkfParams) -> (f64, f64, f64, f64) {
    let rf = r as f64;
    let lambda = params.alpha * params.alpha * (rf + params.kappa) - rf;
    let c = rf + lambda;
    let wm0 = lambda / c;
    (c, wm0, wm0 + 1.0 - params.alpha * params.alpha + params.beta, 1.0 / (2.0 * c))
}

fn ukf_moments(model: &DynamicsModel, belief: &GaussianBelief, params: &UkfParams) -> Result<Moments> {
    let r = belief.mean.len();
    let m = model.m();
    let (c, wm0, wc0, wi) = sigma_weights(r, params);
    let s = sigma_factor(&belief.cov, c).ok_or(Error::NonFiniteEvaluation { what: "covariance factor" })?;

    let mut sigma = Vec::with_capacity(2 * r + 1);
    sigma.push(belief.mean.clone());
    for j in 0..r {
        sigma.push(&belief.mean + s.column(j));
    }
    for j in 0..r {
        sigma.push(&belief.mean - s.column(j));
    }
    let fs: Vec<DVector<f64>> = sigma.iter().map(|x| DVector::from_vec(model.drift_vec(x.as_slice()))).collect();
    let hs: Vec<DVector<f64>> = sigma.iter().map(|x| DVector::from_vec(model.obs_vec(x.as_slice()))).collect();
    let wmean = |k: usize| if k == 0 { wm0 } else { wi };
    let wcov = |k: usize| if k == 0 { wc0 } else { wi };

    let mut f = DVector::zeros(r);
    let mut h = DVector::zeros(m);
    let mut a = DMatrix::zeros(r, r);
    for k in 0..sigma.len() {
        f += &fs[k] * wmean(k);
        h += &hs[k] * wmean(k);
        a += model.diffusion(sigma[k].as_slice()) * wmean(k);
    }
    let mut p_xf = DMatrix::zeros(r, r);
    let mut p_xh = DMatrix::zeros(r, m);
    for k in 1..sigma.len() {
        let dx = &sigma[k] - &belief.mean;
        p_xf += &dx * (&fs[k] - &f).transpose() * wcov(k);
        p_xh += &dx * (&hs[k] - &h).transpose() * wcov(k);
    }
    // Statistical linearisation of h for the discrete fallback: P_xh^T P^+.
    let p_pinv = pseudoinverse_spd(&belief.cov, None)?.pinv;
    let jac_h = p_xh.transpose() * p_pinv;
    Ok(Moments {
        f,
        h,
        p_xf,
        p_xh,
        a,
        b: model.obs_covariance(belief.mean.as_slice()),
        jac_h,
    })
}

fn run_gaussian(
    model: &DynamicsModel,
    obs: &ObservationPath,
    truth: &Trajectory,
    cfg: &BaselineConfig,
    moments: impl Fn(&GaussianBelief) -> Result<Moments>,
) -> Result<RunResult> {
    cfg.validate()?;
    check_run_inputs(model, obs, truth, cfg.dt)?;
    let start = Instant::now();
    let r = model.r();
    let k_steps = obs.steps();
    let mut belief = GaussianBelief::initial(model, truth, cfg)?;
    let mut diag = Diagnostics::default();
    let mut estimates = Vec::with_capacity(k_steps * r);
    let mut diverged = false;
    for k in 0..k_steps {
        let dy = DVector::from_column_slice(obs.increment(k));
        let ok = moments(&belief).and_then(|mo| kalman_bucy_update(&mut belief, &mo, &dy, cfg.dt, &mut diag));
        if ok.is_err() || belief.mean.iter().any(|v| !v.is_finite()) {
            diverged = true;
            estimates.resize(k_steps * r, f64::NAN);
            break;
        }
        estimates.extend(belief.mean.iter());
    }
    let total = start.elapsed().as_secs_f64();
    RunResult::scored(estimates, truth, diverged, diag, (0.0, total, total))
}

/// Continuous-discrete extended Kalman filter (Jacobians by complex step).
pub fn ekf_run(
    model: &DynamicsModel,
    obs: &ObservationPath,
    truth: &Trajectory,
    cfg: &BaselineConfig,
) -> Result<RunResult> {
    run_gaussian(model, obs, truth, cfg, |b| ekf_moments(model, b))
}

/// Continuous-discrete unscented Kalman filter with `2r + 1` sigma points.
pub fn ukf_run(
    model: &DynamicsModel,
    obs: &ObservationPath,
    truth: &Trajectory,
    cfg: &BaselineConfig,
) -> Result<RunResult> {
    let params = cfg.ukf;
    run_gaussian(model, obs, truth, cfg, |b| ukf_moments(model, b, &params))
}

/// Euler-discretised Kalman-Bucy filter; requires `f = A x`, `h = H x` and
/// constant noise.
pub fn kalman_bucy_run(
    model: &DynamicsModel,
    obs: &ObservationPath,
    truth: &Trajectory,
    cfg: &BaselineConfig,
) -> Result<RunResult> {
    let lin = model
        .linear()
        .ok_or_else(|| Error::InvalidModel(format!("{} is not linear", model.name())))?
        .clone();
    if !model.diffusion_is_constant() || !model.obs_covariance_is_constant() {
        return Err(Error::InvalidModel("Kalman-Bucy needs constant noise".into()));
    }
    let x = vec![0.0; model.r()];
    let q = model.diffusion(&x);
    let b = model.obs_covariance(&x);
    run_gaussian(model, obs, truth, cfg, |belief| {
        Ok(Moments {
            f: &lin.a * &belief.mean,
            h: &lin.h * &belief.mean,
            p_xf: &belief.cov * lin.a.transpose(),
            p_xh: &belief.cov * lin.h.transpose(),
            a: q.clone(),
            b: b.clone(),
            jac_h: lin.h.clone(),
        })
    })
}
