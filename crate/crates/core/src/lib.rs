//! Continuous-time nonlinear filtering on quasi-Monte Carlo point sets.
//!
//! The crate is organised bottom-up:
//!
//! * [`qmc`]: Halton, Sobol, Faure and Latin hypercube point sets, plus an
//!   exact two-dimensional star-discrepancy routine.
//! * [`models`]: drift/observation models, Euler-Maruyama simulation and
//!   numerical divergence (complex step and central difference).
//! * [`kernel`]: the short-time kernel approximation of the Kolmogorov
//!   forward propagator, its multi-time-scale extension and the assembled
//!   transition operator.
//! * [`filter`]: the sampled filter itself (log-domain prediction and
//!   correction, estimation, local resampling-restart).
//! * [`baselines`]: EKF, UKF, bootstrap particle filter and Kalman-Bucy,
//!   driven by the same observation paths.
//! * [`bench`]: metrics, experiment presets, multi-trial orchestration and
//!   CSV output.

pub mod baselines;
pub mod bench;
pub mod error;
pub mod filter;
pub mod kernel;
pub mod logsum;
pub mod models;
pub mod qmc;
pub mod rng;

pub use error::{Error, Result};
