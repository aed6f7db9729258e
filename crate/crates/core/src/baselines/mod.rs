//! Reference filters driven by the same observation paths as the sampled
//! filter: extended and unscented Kalman filters, a bootstrap particle
//! filter and the Kalman-Bucy filter for linear models.
//!
//! Every method treats an increment `dy` as `h(x) dt` plus noise with
//! covariance `b dt`.

mod kalman;
mod pf;

pub use kalman::{ekf_run, kalman_bucy_run, ukf_run, GaussianBelief, UkfParams};
pub use pf::{pf_run, ParticleEnsemble};

use crate::error::{Error, Result};

/// Settings shared by the baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub dt: f64,
    /// Initial mean; `None` means the true initial state.
    pub x0_guess: Option<Vec<f64>>,
    /// Initial covariance is `init_std^2 I` (particles are drawn from it).
    pub init_std: f64,
    pub ukf: UkfParams,
    pub seed: u64,
    pub trial: u64,
    /// Resample when ESS drops below this fraction of the particle count.
    pub ess_fraction: f64,
}

impl BaselineConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            x0_guess: None,
            init_std: 1.0,
            ukf: UkfParams::default(),
            seed: 0,
            trial: 0,
            ess_fraction: 0.5,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.init_std >= 0.0) || !(self.ess_fraction > 0.0 && self.ess_fraction <= 1.0) {
            return Err(Error::Config(
                "baseline config needs dt > 0, init_std >= 0 and ess_fraction in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}
