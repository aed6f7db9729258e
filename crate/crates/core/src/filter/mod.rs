//! The sampled filter: offline operator assembly on a QMC point set, online
//! log-domain prediction and observation correction, and local restarts.

mod config;

pub use config::{FilterConfig, RestartInit};

use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::bench::metrics::{mean_error, rmse};
use crate::error::{Error, Result};
use crate::kernel::{
    apply_operator_into, assemble_operator_with, load_operator, operator_cache_path,
    pseudoinverse_spd, save_operator, DistanceCache, SignedLogVec, TransitionOperator,
};
use crate::logsum::log_sum_exp;
use crate::models::{DivergenceMethod, DynamicsModel, ObservationPath, Trajectory};
use crate::qmc::{generate_unit, scale_to_domain, Domain, PointSet};

/// `h . dy - dt |h|^2 / 2`: log of the observation factor for unit noise.
pub fn ito_log_factor(h: &[f64], dy: &[f64], dt: f64) -> f64 {
    let mut cross = 0.0;
    let mut sq = 0.0;
    for (a, b) in h.iter().zip(dy) {
        cross += a * b;
        sq += a * a;
    }
    cross - 0.5 * dt * sq
}

/// Counters collected during a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Negative posterior values set to zero after a higher-order prediction.
    pub clamped_negatives: u64,
    pub restarts: u64,
    /// Particle-filter weight collapses answered with a uniform reset.
    pub degenerate_events: u64,
    /// Kalman steps that fell back to the discrete Joseph update.
    pub stiff_fallbacks: u64,
    /// Zeroed boundary rows in the most recent operator.
    pub boundary_rows: usize,
    pub divergence_method: Option<DivergenceMethod>,
}

/// Output of any filter run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// Row `k-1` estimates the state at step `k`, `k = 1..=K`.
    pub estimates: Vec<f64>,
    pub r: usize,
    pub rmse: f64,
    pub me: f64,
    pub time_offline_s: f64,
    pub time_online_s: f64,
    pub time_total_s: f64,
    pub diverged: bool,
    pub diagnostics: Diagnostics,
}

impl RunResult {
    pub fn steps(&self) -> usize {
        self.estimates.len() / self.r.max(1)
    }

    pub fn estimate(&self, k: usize) -> &[f64] {
        &self.estimates[k * self.r..(k + 1) * self.r]
    }

    /// Computes metrics against `truth` (rows `1..=K`).
    pub(crate) fn scored(
        estimates: Vec<f64>,
        truth: &Trajectory,
        diverged: bool,
        diagnostics: Diagnostics,
        times: (f64, f64, f64),
    ) -> Result<Self> {
        let r = truth.r();
        let (rm, me) = if diverged {
            (f64::INFINITY, f64::INFINITY)
        } else {
            let t = truth.after_initial();
            let rm = rmse(&estimates, t, r)?;
            let me = mean_error(&estimates, t, r)?;
            if rm.is_finite() && me.is_finite() {
                (rm, me)
            } else {
                (f64::INFINITY, f64::INFINITY)
            }
        };
        Ok(Self {
            estimates,
            r,
            rmse: rm,
            me,
            time_offline_s: times.0,
            time_online_s: times.1,
            time_total_s: times.2,
            diverged: diverged || !rm.is_finite(),
            diagnostics,
        })
    }
}

/// Observation weighting `beta = b^{-1}` (or `b^+`), fixed or per point.
#[derive(Debug, Clone)]
enum ObsWeight {
    Identity,
    Constant(nalgebra::DMatrix<f64>),
    PerPoint,
}

/// Mutable state of a running filter.
#[derive(Debug, Clone)]
pub struct FilterState {
    points: PointSet,
    reference_unit: Arc<PointSet>,
    op: TransitionOperator,
    logw: Vec<f64>,
    signs: Vec<i8>,
    estimate: Vec<f64>,
    step: usize,
    diagnostics: Diagnostics,
    obs_weight: ObsWeight,
    /// `beta h(x_i)`, row-major `n x m`.
    beta_h: Vec<f64>,
    /// `h(x_i)^T beta h(x_i)`.
    h_beta_h: Vec<f64>,
    scratch: SignedLogVec,
    distances: DistanceCache,
    time_offline_s: f64,
}

impl FilterState {
    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn reference_unit(&self) -> &Arc<PointSet> {
        &self.reference_unit
    }

    pub fn operator(&self) -> &TransitionOperator {
        &self.op
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.logw
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn estimate(&self) -> &[f64] {
        &self.estimate
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    /// Seconds spent assembling operators so far.
    pub fn time_offline_s(&self) -> f64 {
        self.time_offline_s
    }

    /// Sets the log-weights directly (signs become +1 where finite) and
    /// renormalises. Intended for experiments and tests.
    pub fn set_log_weights(&mut self, logw: &[f64]) -> Result<()> {
        if logw.len() != self.logw.len() {
            return Err(Error::DimensionMismatch {
                expected: self.logw.len(),
                got: logw.len(),
            });
        }
        self.logw.copy_from_slice(logw);
        for (s, w) in self.signs.iter_mut().zip(&self.logw) {
            *s = if *w > f64::NEG_INFINITY { 1 } else { 0 };
        }
        self.normalize_and_estimate()
    }

    fn normalize_and_estimate(&mut self) -> Result<()> {
        let lse = log_sum_exp(&self.logw);
        if !lse.is_finite() {
            return Err(Error::FilterCollapse { step: self.step });
        }
        let r = self.points.dim();
        let mut est = vec![0.0; r];
        for (i, w) in self.logw.iter_mut().enumerate() {
            *w -= lse;
            let p = w.exp();
            if p > 0.0 {
                for (e, x) in est.iter_mut().zip(self.points.point(i)) {
                    *e += p * x;
                }
            }
        }
        if est.iter().any(|v| !v.is_finite()) {
            return Err(Error::FilterCollapse { step: self.step });
        }
        self.estimate = est;
        Ok(())
    }
}

fn build_operator(
    model: &DynamicsModel,
    points: &PointSet,
    reference_unit: &PointSet,
    cfg: &FilterConfig,
    distances: &mut DistanceCache,
) -> Result<TransitionOperator> {
    let half_width = points.domain().half_width();
    let offsets: Vec<f64> = reference_unit
        .as_slice()
        .iter()
        .map(|u| (2.0 * u - 1.0) * half_width)
        .collect();
    let assemble = |distances: &mut DistanceCache| {
        assemble_operator_with(model, points, Some(&offsets), &cfg.kernel, cfg.boundary_tol, distances)
    };
    let Some(dir) = &cfg.op_cache else {
        return assemble(distances);
    };
    let path = operator_cache_path(dir, model.name(), &cfg.kernel, points.fingerprint());
    if let Some(op) = load_operator(&path, &cfg.kernel, model.r(), points.fingerprint())? {
        if op.n() == points.len() {
            return Ok(op);
        }
    }
    let op = assemble(distances)?;
    save_operator(&path, &op)?;
    Ok(op)
}

fn observation_terms(
    model: &DynamicsModel,
    points: &PointSet,
    weight: &ObsWeight,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = model.m();
    let n = points.len();
    let mut beta_h = Vec::with_capacity(n * m);
    let mut h_beta_h = Vec::with_capacity(n);
    let mut h = vec![0.0; m];
    for x in points.iter() {
        model.obs(x, &mut h);
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation { what: "observation" });
        }
        let bh: Vec<f64> = match weight {
            ObsWeight::Identity => h.clone(),
            ObsWeight::Constant(beta) => (beta * nalgebra::DVector::from_column_slice(&h)).as_slice().to_vec(),
            ObsWeight::PerPoint => {
                let beta = pseudoinverse_spd(&model.obs_covariance(x), None)?.pinv;
                (beta * nalgebra::DVector::from_column_slice(&h)).as_slice().to_vec()
            }
        };
        h_beta_h.push(h.iter().zip(&bh).map(|(a, b)| a * b).sum());
        beta_h.extend_from_slice(&bh);
    }
    Ok((beta_h, h_beta_h))
}

fn gaussian_log_weights(points: &PointSet, center: &[f64], std: f64) -> Vec<f64> {
    let inv = 1.0 / (2.0 * std * std);
    points
        .iter()
        .map(|x| -x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() * inv)
        .collect()
}

/// Generates the reference point set, assembles the first operator and
/// places a Gaussian of width `init_std` at `x0_center`.
pub fn init_filter(model: &DynamicsModel, cfg: &FilterConfig, x0_center: &[f64]) -> Result<FilterState> {
    cfg.validate()?;
    let r = model.r();
    if x0_center.len() != r {
        return Err(Error::DimensionMismatch {
            expected: r,
            got: x0_center.len(),
        });
    }
    let t0 = Instant::now();
    let kind = cfg.sequence_for(r);
    let skip = cfg.skip.unwrap_or_else(|| kind.default_skip());
    let reference_unit = Arc::new(generate_unit(kind, cfg.n, r, skip, cfg.seed)?);
    let mut state = init_filter_with_reference(model, cfg, reference_unit, x0_center)?;
    state.time_offline_s = t0.elapsed().as_secs_f64();
    Ok(state)
}

/// [`init_filter`] with a caller-supplied reference set in the unit cube
/// (its size overrides `cfg.n`).
pub fn init_filter_with_reference(
    model: &DynamicsModel,
    cfg: &FilterConfig,
    reference_unit: Arc<PointSet>,
    x0_center: &[f64],
) -> Result<FilterState> {
    let r = model.r();
    if x0_center.len() != r || reference_unit.dim() != r {
        return Err(Error::DimensionMismatch {
            expected: r,
            got: if x0_center.len() != r { x0_center.len() } else { reference_unit.dim() },
        });
    }
    if reference_unit.as_slice().iter().any(|u| !(0.0..=1.0).contains(u)) {
        return Err(Error::InvalidInput("reference points must lie in the unit cube".into()));
    }
    let t0 = Instant::now();
    let domain = Domain::new(x0_center.to_vec(), cfg.initial_half_width())
        .map_err(|e| Error::Initialization(e.to_string()))?;
    let points = scale_to_domain(&reference_unit, &domain)?;
    let mut distances = DistanceCache::new();
    let op = build_operator(model, &points, &reference_unit, cfg, &mut distances)?;
    let boundary_rows = op.boundary_mask().iter().filter(|&&b| b).count();
    if boundary_rows == points.len() {
        return Err(Error::Initialization(
            "every sample point lies on the domain boundary".into(),
        ));
    }
    let obs_weight = if model.obs_noise().is_none() {
        ObsWeight::Identity
    } else if model.obs_covariance_is_constant() {
        ObsWeight::Constant(pseudoinverse_spd(&model.obs_covariance(x0_center), None)?.pinv)
    } else {
        ObsWeight::PerPoint
    };
    let (beta_h, h_beta_h) = observation_terms(model, &points, &obs_weight)?;
    let logw = gaussian_log_weights(&points, x0_center, cfg.init_std);
    let n = points.len();
    let mut state = FilterState {
        diagnostics: Diagnostics {
            boundary_rows,
            divergence_method: op.divergence_method(),
            ..Diagnostics::default()
        },
        points,
        reference_unit,
        op,
        logw,
        signs: vec![1; n],
        estimate: x0_center.to_vec(),
        step: 0,
        obs_weight,
        beta_h,
        h_beta_h,
        scratch: SignedLogVec::with_len(n),
        distances,
        time_offline_s: 0.0,
    };
    state.normalize_and_estimate()?;
    state.time_offline_s = t0.elapsed().as_secs_f64();
    Ok(state)
}

/// One prediction-correction cycle with observation increment `dy`.
pub fn step(state: &mut FilterState, model: &DynamicsModel, cfg: &FilterConfig, dy: &[f64]) -> Result<()> {
    let m = model.m();
    if dy.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: dy.len() });
    }
    if dy.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("observation increment is not finite".into()));
    }
    state.step += 1;
    let k = state.step;
    apply_operator_into(&state.op, &state.logw, &mut state.scratch).map_err(|e| match e {
        Error::DegenerateWeights => Error::FilterCollapse { step: k },
        other => other.at_step(k),
    })?;
    let dt = cfg.dt();
    for i in 0..state.logw.len() {
        let sign = state.scratch.sign[i];
        if sign < 0 {
            state.diagnostics.clamped_negatives += 1;
        }
        if sign <= 0 {
            state.logw[i] = f64::NEG_INFINITY;
            state.signs[i] = 0;
            continue;
        }
        let bh = &state.beta_h[i * m..(i + 1) * m];
        let cross: f64 = bh.iter().zip(dy).map(|(a, b)| a * b).sum();
        state.logw[i] = state.scratch.log_abs[i] + cross - 0.5 * dt * state.h_beta_h[i];
        state.signs[i] = 1;
    }
    state.normalize_and_estimate()
}

/// Re-centres the reference point set at the current estimate with
/// half-width `R`, reassembles and resets the weights.
pub fn restart(state: &mut FilterState, model: &DynamicsModel, cfg: &FilterConfig) -> Result<()> {
    let step = state.step;
    if state.estimate.iter().any(|v| !v.is_finite()) {
        return Err(Error::RestartAborted { step });
    }
    let t0 = Instant::now();
    let center = state.estimate.clone();
    let domain = Domain::new(center.clone(), cfg.half_width).map_err(|_| Error::RestartAborted { step })?;
    let points = scale_to_domain(&state.reference_unit, &domain)?;
    let op = build_operator(model, &points, &state.reference_unit, cfg, &mut state.distances)
        .map_err(|e| e.at_step(step))?;
    let (beta_h, h_beta_h) = observation_terms(model, &points, &state.obs_weight).map_err(|e| e.at_step(step))?;
    state.logw = match cfg.restart_init {
        RestartInit::Gaussian => gaussian_log_weights(&points, &center, cfg.half_width / 3.0),
        RestartInit::Uniform => vec![0.0; points.len()],
    };
    state.signs.fill(1);
    state.diagnostics.boundary_rows = op.boundary_mask().iter().filter(|&&b| b).count();
    state.diagnostics.restarts += 1;
    state.points = points;
    state.op = op;
    state.beta_h = beta_h;
    state.h_beta_h = h_beta_h;
    let lse = log_sum_exp(&state.logw);
    for w in state.logw.iter_mut() {
        *w -= lse;
    }
    state.estimate = center;
    state.time_offline_s += t0.elapsed().as_secs_f64();
    Ok(())
}

/// Runs the filter over a whole observation path and scores it against `truth`.
pub fn run_filter(
    model: &DynamicsModel,
    obs: &ObservationPath,
    truth: &Trajectory,
    cfg: &FilterConfig,
) -> Result<RunResult> {
    check_run_inputs(model, obs, truth, cfg.dt())?;
    let start = Instant::now();
    let x0 = cfg.x0_guess.clone().unwrap_or_else(|| truth.initial().to_vec());
    let mut state = init_filter(model, cfg, &x0)?;
    let k_steps = obs.steps();
    let mut estimates = Vec::with_capacity(k_steps * model.r());
    let mut online = 0.0;
    for k in 1..=k_steps {
        let t = Instant::now();
        step(&mut state, model, cfg, obs.increment(k - 1))?;
        online += t.elapsed().as_secs_f64();
        estimates.extend_from_slice(&state.estimate);
        if cfg.restarts_enabled() && k % cfg.restart_interval == 0 && k < k_steps {
            restart(&mut state, model, cfg)?;
        }
    }
    let total = start.elapsed().as_secs_f64();
    RunResult::scored(
        estimates,
        truth,
        false,
        state.diagnostics.clone(),
        (state.time_offline_s, online, total),
    )
}

pub(crate) fn check_run_inputs(
    model: &DynamicsModel,
    obs: &ObservationPath,
    truth: &Trajectory,
    dt: f64,
) -> Result<()> {
    if obs.steps() != truth.steps() {
        return Err(Error::InvalidInput(format!(
            "observation path has {} steps but the trajectory has {}",
            obs.steps(),
            truth.steps()
        )));
    }
    if obs.m() != model.m() || truth.r() != model.r() {
        return Err(Error::DimensionMismatch {
            expected: model.m(),
            got: obs.m(),
        });
    }
    let tol = 1e-9 * dt;
    if (obs.dt() - dt).abs() > tol || (truth.dt() - dt).abs() > tol {
        return Err(Error::InvalidInput(format!(
            "time step mismatch: config {dt}, observations {}, trajectory {}",
            obs.dt(),
            truth.dt()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests;
