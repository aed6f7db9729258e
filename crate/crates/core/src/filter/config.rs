use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, DEFAULT_BOUNDARY_TOL};
use crate::qmc::SequenceKind;

/// How log-weights are reset after a restart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RestartInit {
    /// Gaussian at the estimate with standard deviation `R / 3`.
    #[default]
    Gaussian,
    /// Flat weights over the new cube.
    Uniform,
}

/// Parameters of one filter run.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    /// Number of sample points `n`.
    pub n: usize,
    /// Local half-width `R` used around restart centres.
    pub half_width: f64,
    /// Global half-width; used instead of `R` when restarts are disabled.
    pub global_half_width: Option<f64>,
    /// Restart every `restart_interval` steps; 1 disables restarts.
    pub restart_interval: usize,
    pub kernel: KernelSpec,
    /// `None` picks Halton below ten dimensions and Sobol above.
    pub sequence: Option<SequenceKind>,
    /// `None` uses the sequence's default skip.
    pub skip: Option<u64>,
    /// Standard deviation of the initial Gaussian density.
    pub init_std: f64,
    pub seed: u64,
    pub boundary_tol: f64,
    pub restart_init: RestartInit,
    /// Initial domain centre; `None` means the true initial state.
    pub x0_guess: Option<Vec<f64>>,
    /// Directory for the binary operator cache.
    pub op_cache: Option<PathBuf>,
}

impl FilterConfig {
    /// First-order kernel, no restarts, defaults elsewhere.
    pub fn new(n: usize, half_width: f64, dt: f64) -> Result<Self> {
        let cfg = Self {
            n,
            half_width,
            global_half_width: None,
            restart_interval: 1,
            kernel: KernelSpec::new(1, dt)?,
            sequence: None,
            skip: None,
            init_std: 1.0,
            seed: 0,
            boundary_tol: DEFAULT_BOUNDARY_TOL,
            restart_init: RestartInit::Gaussian,
            x0_guess: None,
            op_cache: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_restarts(mut self, interval: usize) -> Self {
        self.restart_interval = interval;
        self
    }

    pub fn with_order(mut self, order: usize) -> Result<Self> {
        self.kernel = KernelSpec::new(order, self.kernel.dt)?;
        Ok(self)
    }

    pub fn dt(&self) -> f64 {
        self.kernel.dt
    }

    pub fn restarts_enabled(&self) -> bool {
        self.restart_interval > 1
    }

    /// Half-width of the initial cube.
    pub fn initial_half_width(&self) -> f64 {
        if self.restarts_enabled() {
            self.half_width
        } else {
            self.global_half_width.unwrap_or(self.half_width)
        }
    }

    pub fn sequence_for(&self, r: usize) -> SequenceKind {
        self.sequence.unwrap_or_else(|| SequenceKind::default_for_dimension(r))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n < 2 {
            return bad(format!("n must be >= 2, got {}", self.n));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return bad(format!("half_width must be positive, got {}", self.half_width));
        }
        if let Some(g) = self.global_half_width {
            if !(g > 0.0 && g.is_finite()) {
                return bad(format!("global_half_width must be positive, got {g}"));
            }
        }
        if self.restart_interval == 0 {
            return bad("restart_interval must be >= 1".into());
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return bad(format!("init_std must be positive, got {}", self.init_std));
        }
        if !(self.boundary_tol >= 0.0) {
            return bad("boundary_tol must be >= 0".into());
        }
        if self.sequence == Some(SequenceKind::Explicit) {
            return bad("explicit point sets cannot be used as a filter sequence".into());
        }
        self.kernel.validate().map_err(|e| Error::Config(e.to_string()))
    }
}
