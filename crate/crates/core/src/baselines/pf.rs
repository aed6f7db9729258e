use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::BaselineConfig;
use crate::error::{Error, Result};
use crate::filter::{check_run_inputs, Diagnostics, RunResult};
use crate::kernel::pseudoinverse_spd;
use crate::logsum::{effective_sample_size, normalize_log_weights};
use crate::models::{apply_noise, DynamicsModel, ObservationPath, Trajectory};
use crate::rng::{stream_rng, Stream};

/// Weighted particle cloud, row-major `n_p x r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub particles: Vec<f64>,
    pub logw: Vec<f64>,
    pub r: usize,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.logw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logw.is_empty()
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.particles[i * self.r..(i + 1) * self.r]
    }

    pub fn weighted_mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.r];
        for (i, &lw) in self.logw.iter().enumerate() {
            let w = lw.exp();
            for (o, x) in out.iter_mut().zip(self.particle(i)) {
                *o += w * x;
            }
        }
        out
    }

    /// Systematic resampling; weights become uniform.
    pub fn resample_systematic(&mut self, rng: &mut ChaCha8Rng) {
        let n = self.len();
        let r = self.r;
        let u0: f64 = rng.random::<f64>() / n as f64;
        let mut resampled = Vec::with_capacity(self.particles.len());
        let mut cumulative = self.logw[0].exp();
        let mut j = 0;
        for i in 0..n {
            let u = u0 + i as f64 / n as f64;
            while u > cumulative && j + 1 < n {
                j += 1;
                cumulative += self.logw[j].exp();
            }
            resampled.extend_from_slice(&self.particles[j * r..(j + 1) * r]);
        }
        self.particles = resampled;
        self.logw.fill(-(n as f64).ln());
    }
}

/// `h^T beta dy - dt h^T beta h / 2` for a given `beta`.
fn log_likelihood(h: &[f64], beta: &DMatrix<f64>, dy: &[f64], dt: f64) -> f64 {
    let m = h.len();
    let mut out = 0.0;
    for i in 0..m {
        for j in 0..m {
            out += h[i] * beta[(i, j)] * (dy[j] - 0.5 * dt * h[j]);
        }
    }
    out
}

/// Bootstrap particle filter with `n_p` particles.
pub fn pf_run(
    model: &DynamicsModel,
    obs: &ObservationPath,
    truth: &Trajectory,
    cfg: &BaselineConfig,
    n_p: usize,
) -> Result<RunResult> {
    cfg.validate()?;
    check_run_inputs(model, obs, truth, cfg.dt)?;
    if n_p < 2 {
        return Err(Error::Config("particle filter needs at least 2 particles".into()));
    }
    let start = Instant::now();
    let r = model.r();
    let m = model.m();
    let dt = cfg.dt;
    let sqrt_dt = dt.sqrt();
    let x0 = cfg.x0_guess.clone().unwrap_or_else(|| truth.initial().to_vec());
    if x0.len() != r {
        return Err(Error::DimensionMismatch {
            expected: r,
            got: x0.len(),
        });
    }
    let mut rng = stream_rng(cfg.seed, cfg.trial, Stream::ParticleFilter);
    let mut ens = ParticleEnsemble {
        particles: Vec::with_capacity(n_p * r),
        logw: vec![-(n_p as f64).ln(); n_p],
        r,
    };
    for _ in 0..n_p {
        for &c in &x0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            ens.particles.push(c + cfg.init_std * z);
        }
    }
    let constant_beta = if model.obs_covariance_is_constant() {
        Some(pseudoinverse_spd(&model.obs_covariance(&x0), None)?.pinv)
    } else {
        None
    };

    let mut diag = Diagnostics::default();
    let k_steps = obs.steps();
    let mut estimates = Vec::with_capacity(k_steps * r);
    let mut f = vec![0.0; r];
    let mut h = vec![0.0; m];
    let mut xi = vec![0.0; r];
    let mut noise = vec![0.0; r];
    let mut diverged = false;
    for k in 0..k_steps {
        let dy = obs.increment(k);
        for i in 0..n_p {
            let x = &mut ens.particles[i * r..(i + 1) * r];
            model.drift(x, &mut f);
            for v in xi.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            apply_noise(model.state_noise(), x, &xi, &mut noise);
            for c in 0..r {
                x[c] += f[c] * dt + noise[c] * sqrt_dt;
            }
            model.obs(x, &mut h);
            let ll = match &constant_beta {
                Some(beta) => log_likelihood(&h, beta, dy, dt),
                None => log_likelihood(&h, &pseudoinverse_spd(&model.obs_covariance(x), None)?.pinv, dy, dt),
            };
            ens.logw[i] = if ll.is_nan() { f64::NEG_INFINITY } else { ens.logw[i] + ll };
        }
        if normalize_log_weights(&mut ens.logw).is_none() {
            diag.degenerate_events += 1;
            ens.logw.fill(-(n_p as f64).ln());
        }
        let est = ens.weighted_mean();
        if est.iter().any(|v| !v.is_finite()) {
            diverged = true;
            estimates.resize(k_steps * r, f64::NAN);
            break;
        }
        estimates.extend_from_slice(&est);
        if effective_sample_size(&ens.logw) < cfg.ess_fraction * n_p as f64 {
            ens.resample_systematic(&mut rng);
        }
    }
    let total = start.elapsed().as_secs_f64();
    RunResult::scored(estimates, truth, diverged, diag, (0.0, total, total))
}
