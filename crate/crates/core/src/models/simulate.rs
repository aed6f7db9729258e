use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DynamicsModel, NoiseCoeff};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Where `h` is evaluated within an Euler step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObsEval {
    /// `dy_{k+1} = h(x_k) dt + ...`
    Pre,
    /// `dy_{k+1} = h(x_{k+1}) dt + ...`
    #[default]
    Post,
}

impl std::str::FromStr for ObsEval {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pre" => Ok(ObsEval::Pre),
            "post" => Ok(ObsEval::Post),
            other => Err(Error::Config(format!("obs_eval must be pre or post, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    /// Final time `T`.
    pub horizon: f64,
    /// Number of Euler steps `K`.
    pub steps: usize,
    pub seed: u64,
    pub trial: u64,
    pub obs_eval: ObsEval,
}

impl SimulationConfig {
    pub fn new(horizon: f64, steps: usize, seed: u64) -> Self {
        Self {
            horizon,
            steps,
            seed,
            trial: 0,
            obs_eval: ObsEval::default(),
        }
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }
}

/// States `x_0 .. x_K` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<f64>,
    r: usize,
    dt: f64,
    t0: f64,
}

impl Trajectory {
    /// `states` is row-major `(K+1) x r`.
    pub fn from_rows(states: Vec<f64>, r: usize, dt: f64, t0: f64) -> Result<Self> {
        if r == 0 || states.len() % r != 0 || states.len() / r < 2 {
            return Err(Error::InvalidInput(
                "trajectory needs at least two states of dimension >= 1".into(),
            ));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { states, r, dt, t0 })
    }

    /// Number of steps `K` (one less than the number of states).
    pub fn steps(&self) -> usize {
        self.states.len() / self.r - 1
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.r..(k + 1) * self.r]
    }

    pub fn initial(&self) -> &[f64] {
        self.state(0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.states
    }

    /// Rows `1..=K`, the states matching filter estimates.
    pub fn after_initial(&self) -> &[f64] {
        &self.states[self.r..]
    }
}

/// Observation increments `dy_1 .. dy_K` and their running sums `Y_0 = 0, Y_1, ..`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPath {
    increments: Vec<f64>,
    cumulative: Vec<f64>,
    m: usize,
    dt: f64,
}

impl ObservationPath {
    /// `increments` is row-major `K x m`.
    pub fn from_increments(increments: Vec<f64>, m: usize, dt: f64) -> Result<Self> {
        if m == 0 || increments.len() % m != 0 || increments.is_empty() {
            return Err(Error::InvalidInput(
                "observation path needs K >= 1 increments of dimension >= 1".into(),
            ));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        let k = increments.len() / m;
        let mut cumulative = vec![0.0; (k + 1) * m];
        for step in 0..k {
            for j in 0..m {
                cumulative[(step + 1) * m + j] = cumulative[step * m + j] + increments[step * m + j];
            }
        }
        Ok(Self {
            increments,
            cumulative,
            m,
            dt,
        })
    }

    pub fn steps(&self) -> usize {
        self.increments.len() / self.m
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `dy_{k+1}` for `k = 0 .. K-1`.
    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.m..(k + 1) * self.m]
    }

    /// `Y_k` for `k = 0 .. K`.
    pub fn cumulative(&self, k: usize) -> &[f64] {
        &self.cumulative[k * self.m..(k + 1) * self.m]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }
}

/// Euler-Maruyama simulation of state and observation increments.
pub fn simulate(
    model: &DynamicsModel,
    x0: &[f64],
    cfg: &SimulationConfig,
) -> Result<(Trajectory, ObservationPath)> {
    let r = model.r();
    let m = model.m();
    if x0.len() != r {
        return Err(Error::DimensionMismatch {
            expected: r,
            got: x0.len(),
        });
    }
    if cfg.steps == 0 || !(cfg.horizon > 0.0) || !cfg.horizon.is_finite() {
        return Err(Error::InvalidInput("simulation needs K >= 1 and T > 0".into()));
    }
    let k_steps = cfg.steps;
    let dt = cfg.dt();
    let sqrt_dt = dt.sqrt();
    let mut state_rng = stream_rng(cfg.seed, cfg.trial, Stream::StateNoise);
    let mut obs_rng = stream_rng(cfg.seed, cfg.trial, Stream::ObservationNoise);

    let mut states = Vec::with_capacity((k_steps + 1) * r);
    states.extend_from_slice(x0);
    let mut increments = Vec::with_capacity(k_steps * m);
    let mut f = vec![0.0; r];
    let mut h = vec![0.0; m];
    let mut xi = vec![0.0; r];
    let mut eta = vec![0.0; m];
    let mut x = x0.to_vec();
    let mut noisy = vec![0.0; r.max(m)];

    for k in 0..k_steps {
        for v in xi.iter_mut() {
            *v = StandardNormal.sample(&mut state_rng);
        }
        for v in eta.iter_mut() {
            *v = StandardNormal.sample(&mut obs_rng);
        }
        if cfg.obs_eval == ObsEval::Pre {
            model.obs(&x, &mut h);
            apply_noise(model.obs_noise(), &x, &eta, &mut noisy[..m]);
            push_increment(&mut increments, &h, &noisy[..m], dt, sqrt_dt, k)?;
        }
        model.drift(&x, &mut f);
        apply_noise(model.state_noise(), &x, &xi, &mut noisy[..r]);
        for i in 0..r {
            x[i] += f[i] * dt + noisy[i] * sqrt_dt;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SimulationDiverged {
                step: k + 1,
                what: "state".into(),
            });
        }
        states.extend_from_slice(&x);
        if cfg.obs_eval == ObsEval::Post {
            model.obs(&x, &mut h);
            apply_noise(model.obs_noise(), &x, &eta, &mut noisy[..m]);
            push_increment(&mut increments, &h, &noisy[..m], dt, sqrt_dt, k)?;
        }
    }
    Ok((
        Trajectory::from_rows(states, r, dt, 0.0)?,
        ObservationPath::from_increments(increments, m, dt)?,
    ))
}

pub(crate) fn apply_noise(coeff: Option<&NoiseCoeff>, x: &[f64], z: &[f64], out: &mut [f64]) {
    match coeff {
        None => out.copy_from_slice(z),
        Some(c) => {
            let u = c.at(x);
            for (i, o) in out.iter_mut().enumerate() {
                *o = (0..z.len()).map(|j| u[(i, j)] * z[j]).sum();
            }
        }
    }
}

fn push_increment(
    increments: &mut Vec<f64>,
    h: &[f64],
    noise: &[f64],
    dt: f64,
    sqrt_dt: f64,
    k: usize,
) -> Result<()> {
    for (hi, ni) in h.iter().zip(noise) {
        let dy = hi * dt + ni * sqrt_dt;
        if !dy.is_finite() {
            return Err(Error::SimulationDiverged {
                step: k + 1,
                what: "observation".into(),
            });
        }
        increments.push(dy);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_cubic_sensor, make_linear, RealFn};
    use nalgebra::DMatrix;
    use std::sync::Arc;

    fn noiseless(model: DynamicsModel) -> DynamicsModel {
        let (r, m) = (model.r(), model.m());
        model
            .with_state_noise(NoiseCoeff::Constant(DMatrix::zeros(r, r)))
            .unwrap()
            .with_obs_noise(NoiseCoeff::Constant(DMatrix::zeros(m, m)))
            .unwrap()
    }

    #[test]
    fn zero_drift_zero_noise_is_constant() {
        let f: RealFn = Arc::new(|_, out: &mut [f64]| out.fill(0.0));
        let h: RealFn = Arc::new(|x: &[f64], out: &mut [f64]| out[0] = 2.0 * x[0] + x[1]);
        let model = noiseless(DynamicsModel::new("flat", 2, 1, f, h).unwrap());
        let cfg = SimulationConfig::new(1.0, 10, 3);
        let (traj, obs) = simulate(&model, &[1.0, 2.0], &cfg).unwrap();
        for k in 0..=10 {
            assert_eq!(traj.state(k), &[1.0, 2.0]);
        }
        for k in 0..10 {
            assert!((obs.increment(k)[0] - 4.0 * 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn decay_matches_euler_recursion() {
        let f: RealFn = Arc::new(|x: &[f64], out: &mut [f64]| out[0] = -x[0]);
        let h: RealFn = Arc::new(|x: &[f64], out: &mut [f64]| out[0] = x[0]);
        let model = noiseless(DynamicsModel::new("decay", 1, 1, f, h).unwrap());
        let cfg = SimulationConfig::new(1.0, 50, 0);
        let (traj, _) = simulate(&model, &[1.0], &cfg).unwrap();
        let dt = cfg.dt();
        let mut want = 1.0;
        for k in 0..=50 {
            assert!((traj.state(k)[0] - want).abs() < 1e-15);
            want *= 1.0 - dt;
        }
    }

    #[test]
    fn linear_noiseless_is_explicit_euler() {
        let model = noiseless(make_linear(3));
        let a = model.linear().unwrap().a.clone();
        let cfg = SimulationConfig::new(2.0, 40, 1);
        let (traj, _) = simulate(&model, &[1.0, -1.0, 0.5], &cfg).unwrap();
        let mut x = nalgebra::DVector::from_column_slice(&[1.0, -1.0, 0.5]);
        let dt = cfg.dt();
        for k in 1..=40 {
            x = &x + (&a * &x) * dt;
            for i in 0..3 {
                assert!((traj.state(k)[i] - x[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn cumulative_consistency_and_determinism() {
        let model = make_cubic_sensor(2);
        let cfg = SimulationConfig::new(1.0, 100, 42);
        let (t1, o1) = simulate(&model, &[0.1, 0.2], &cfg).unwrap();
        let (t2, o2) = simulate(&model, &[0.1, 0.2], &cfg).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(o1, o2);
        assert_eq!(o1.cumulative(0), &[0.0, 0.0]);
        for k in 1..=100 {
            for j in 0..2 {
                let d = o1.cumulative(k)[j] - o1.cumulative(k - 1)[j];
                assert!((d - o1.increment(k - 1)[j]).abs() <= 1e-9 * o1.cumulative(k)[j].abs().max(1.0));
            }
        }
        let other = SimulationConfig::new(1.0, 100, 43);
        assert_ne!(simulate(&model, &[0.1, 0.2], &other).unwrap().0, t1);
    }

    #[test]
    fn pre_and_post_differ_only_in_evaluation_point() {
        let model = noiseless(make_linear(1));
        let mut cfg = SimulationConfig::new(1.0, 10, 5);
        let (traj, post) = simulate(&model, &[1.0], &cfg).unwrap();
        cfg.obs_eval = ObsEval::Pre;
        let (_, pre) = simulate(&model, &[1.0], &cfg).unwrap();
        for k in 0..10 {
            assert!((pre.increment(k)[0] - 5.0 * traj.state(k)[0] * 0.1).abs() < 1e-15);
            assert!((post.increment(k)[0] - 5.0 * traj.state(k + 1)[0] * 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn divergence_reports_step() {
        let f: RealFn = Arc::new(|x: &[f64], out: &mut [f64]| out[0] = x[0] * x[0] * 1e100);
        let h: RealFn = Arc::new(|_, out: &mut [f64]| out[0] = 0.0);
        let model = noiseless(DynamicsModel::new("blowup", 1, 1, f, h).unwrap());
        let err = simulate(&model, &[1.0], &SimulationConfig::new(1.0, 100, 0)).unwrap_err();
        assert!(matches!(err, Error::SimulationDiverged { .. }));
    }
}
