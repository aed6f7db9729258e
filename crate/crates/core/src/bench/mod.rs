//! Experiment harness: metrics, presets, multi-trial comparisons, dimension
//! sweeps and CSV output.

pub mod config;
pub mod experiment;
pub mod io;
pub mod metrics;
pub mod sweep;

pub use config::{large_scale_samples, ExperimentConfig, ExperimentKind, ModelKind};
pub use experiment::{
    format_summary, mean_std, run_experiment, run_method, simulate_trial, summarize, write_report,
    ExperimentReport, Method, MetricRow, SummaryRow,
};
pub use metrics::{mean_error, rmse};
pub use sweep::{fit_loglog_slope, sweep_dimension, SweepPoint, SweepReport};
