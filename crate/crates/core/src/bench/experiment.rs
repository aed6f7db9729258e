//! Multi-trial comparisons: every enabled method sees the same simulated path.

use std::fmt::Write as _;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::io::{write_result_json, write_rows_csv, write_trajectory_csv};
use crate::baselines::{ekf_run, kalman_bucy_run, pf_run, ukf_run};
use crate::error::Result;
use crate::filter::{run_filter, RunResult};
use crate::models::{simulate, DynamicsModel, ObservationPath, Trajectory};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ekf,
    Ukf,
    Pf,
    KalmanBucy,
    YauYau,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Ekf, Method::Ukf, Method::Pf, Method::KalmanBucy, Method::YauYau];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ekf => "ekf",
            Method::Ukf => "ukf",
            Method::Pf => "pf",
            Method::KalmanBucy => "kalman_bucy",
            Method::YauYau => "yauyau",
        }
    }

    pub fn enabled_in(self, cfg: &ExperimentConfig) -> bool {
        match self {
            Method::Ekf => cfg.ekf.enabled,
            Method::Ukf => cfg.ukf.enabled,
            Method::Pf => cfg.pf.enabled,
            Method::KalmanBucy => cfg.kalman_bucy.enabled,
            Method::YauYau => cfg.yauyau.enabled,
        }
    }
}

/// One method on one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub trial: usize,
    pub method: Method,
    pub rmse: f64,
    pub me: f64,
    pub time_offline_s: f64,
    pub time_online_s: f64,
    pub time_total_s: f64,
    pub restarts: u64,
    pub clamped_negatives: u64,
    pub stiff_fallbacks: u64,
    pub degenerate_events: u64,
    pub diverged: bool,
    /// Error message when the method failed outright.
    pub error: Option<String>,
}

impl MetricRow {
    fn from_result(trial: usize, method: Method, res: &RunResult) -> Self {
        Self {
            trial,
            method,
            rmse: res.rmse,
            me: res.me,
            time_offline_s: res.time_offline_s,
            time_online_s: res.time_online_s,
            time_total_s: res.time_total_s,
            restarts: res.diagnostics.restarts,
            clamped_negatives: res.diagnostics.clamped_negatives,
            stiff_fallbacks: res.diagnostics.stiff_fallbacks,
            degenerate_events: res.diagnostics.degenerate_events,
            diverged: res.diverged,
            error: None,
        }
    }

    fn failed(trial: usize, method: Method, message: String) -> Self {
        Self {
            trial,
            method,
            rmse: f64::INFINITY,
            me: f64::INFINITY,
            time_offline_s: 0.0,
            time_online_s: 0.0,
            time_total_s: 0.0,
            restarts: 0,
            clamped_negatives: 0,
            stiff_fallbacks: 0,
            degenerate_events: 0,
            diverged: true,
            error: Some(message),
        }
    }
}

/// Mean and sample standard deviation per method over non-diverged trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    pub trials: usize,
    pub diverged: usize,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub me_mean: f64,
    pub me_std: f64,
    pub time_mean: f64,
    pub time_std: f64,
}

/// Sample mean and standard deviation (`n - 1` denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

pub fn summarize(rows: &[MetricRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for method in Method::ALL {
        let mine: Vec<&MetricRow> = rows.iter().filter(|r| r.method == method).collect();
        if mine.is_empty() {
            continue;
        }
        let ok: Vec<&&MetricRow> = mine.iter().filter(|r| !r.diverged).collect();
        let col = |f: fn(&MetricRow) -> f64| mean_std(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
        let (rmse_mean, rmse_std) = col(|r| r.rmse);
        let (me_mean, me_std) = col(|r| r.me);
        let (time_mean, time_std) = col(|r| r.time_total_s);
        out.push(SummaryRow {
            method,
            trials: mine.len(),
            diverged: mine.len() - ok.len(),
            rmse_mean,
            rmse_std,
            me_mean,
            me_std,
            time_mean,
            time_std,
        });
    }
    out
}

/// Plain-text table in `mean ± std` form.
pub fn format_summary(summary: &[SummaryRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:>21} {:>21} {:>21} {:>9}",
        "method", "RMSE", "ME", "time (s)", "diverged"
    );
    for row in summary {
        let _ = writeln!(
            s,
            "{:<12} {:>10.4} ± {:<8.4} {:>10.4} ± {:<8.4} {:>10.4} ± {:<8.4} {:>5}/{}",
            row.method.name(),
            row.rmse_mean,
            row.rmse_std,
            row.me_mean,
            row.me_std,
            row.time_mean,
            row.time_std,
            row.diverged,
            row.trials
        );
    }
    s
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub rows: Vec<MetricRow>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentReport {
    /// Rows of one method in trial order.
    pub fn method_rows(&self, method: Method) -> Vec<&MetricRow> {
        self.rows.iter().filter(|r| r.method == method).collect()
    }

    pub fn rmse(&self, method: Method) -> Vec<f64> {
        self.method_rows(method).iter().map(|r| r.rmse).collect()
    }
}

/// The state and observation path of one trial.
pub fn simulate_trial(cfg: &ExperimentConfig, model: &DynamicsModel, trial: usize) -> Result<(Trajectory, ObservationPath)> {
    let x0 = match &cfg.simulation.x0 {
        Some(x0) => x0.clone(),
        None => {
            let mut rng = stream_rng(cfg.seed, trial as u64, Stream::InitialState);
            (0..model.r()).map(|_| StandardNormal.sample(&mut rng)).collect()
        }
    };
    simulate(model, &x0, &cfg.simulation_config(trial as u64))
}

/// Runs one method on a prepared path.
pub fn run_method(
    cfg: &ExperimentConfig,
    model: &DynamicsModel,
    method: Method,
    trial: usize,
    truth: &Trajectory,
    obs: &ObservationPath,
) -> Result<RunResult> {
    let base = cfg.baseline_config(trial as u64);
    match method {
        Method::Ekf => ekf_run(model, obs, truth, &base),
        Method::Ukf => ukf_run(model, obs, truth, &base),
        Method::Pf => pf_run(model, obs, truth, &base, cfg.pf.particles),
        Method::KalmanBucy => kalman_bucy_run(model, obs, truth, &base),
        Method::YauYau => run_filter(model, obs, truth, &cfg.filter_config()?),
    }
}

fn run_trial(cfg: &ExperimentConfig, model: &DynamicsModel, trial: usize) -> Vec<MetricRow> {
    let methods: Vec<Method> = Method::ALL.into_iter().filter(|m| m.enabled_in(cfg)).collect();
    let (truth, obs) = match simulate_trial(cfg, model, trial) {
        Ok(path) => path,
        Err(e) => {
            log::warn!("trial {trial}: simulation failed: {e}");
            return methods.into_iter().map(|m| MetricRow::failed(trial, m, e.to_string())).collect();
        }
    };
    let dir = cfg
        .out
        .as_ref()
        .filter(|_| cfg.write_estimates)
        .map(|d| d.join(format!("trial_{trial:03}")));
    if let Some(dir) = &dir {
        let written = std::fs::create_dir_all(dir)
            .map_err(Into::into)
            .and_then(|_| write_trajectory_csv(&dir.join("truth.csv"), truth.as_slice(), truth.r(), truth.dt(), 0))
            .and_then(|_| write_trajectory_csv(&dir.join("obs.csv"), obs.increments(), obs.m(), obs.dt(), 1));
        if let Err(e) = written {
            log::warn!("trial {trial}: could not write path CSVs: {e}");
        }
    }
    let mut rows = Vec::with_capacity(methods.len());
    for method in methods {
        match run_method(cfg, model, method, trial, &truth, &obs) {
            Ok(res) => {
                if let Some(dir) = &dir {
                    let file = dir.join(format!("{}.csv", method.name()));
                    if let Err(e) = write_trajectory_csv(&file, &res.estimates, res.r, truth.dt(), 1) {
                        log::warn!("trial {trial}: could not write {}: {e}", file.display());
                    }
                }
                rows.push(MetricRow::from_result(trial, method, &res));
            }
            Err(e) => {
                log::warn!("trial {trial}: {} failed: {e}", method.name());
                rows.push(MetricRow::failed(trial, method, e.to_string()));
            }
        }
    }
    rows
}

/// Runs every trial (in parallel, collected in trial order) and writes
/// `results.csv`, `timings.csv`, `summary.csv` and `config.toml` when an
/// output directory is configured.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let model = cfg.build_model()?;
    let rows: Vec<MetricRow> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| run_trial(cfg, &model, trial))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let report = ExperimentReport {
        summary: summarize(&rows),
        rows,
    };
    if let Some(dir) = &cfg.out {
        write_report(dir, cfg, &report)?;
    }
    Ok(report)
}

pub fn write_report(dir: &Path, cfg: &ExperimentConfig, report: &ExperimentReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_rows_csv(
        &dir.join("results.csv"),
        &[
            "trial",
            "method",
            "rmse",
            "me",
            "restarts",
            "clamped_negatives",
            "stiff_fallbacks",
            "degenerate_events",
            "diverged",
            "error",
        ],
        report.rows.iter().map(|r| {
            vec![
                r.trial.to_string(),
                r.method.name().to_string(),
                format!("{:?}", r.rmse),
                format!("{:?}", r.me),
                r.restarts.to_string(),
                r.clamped_negatives.to_string(),
                r.stiff_fallbacks.to_string(),
                r.degenerate_events.to_string(),
                r.diverged.to_string(),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )?;
    write_rows_csv(
        &dir.join("timings.csv"),
        &["trial", "method", "time_offline_s", "time_online_s", "time_total_s"],
        report.rows.iter().map(|r| {
            vec![
                r.trial.to_string(),
                r.method.name().to_string(),
                format!("{:?}", r.time_offline_s),
                format!("{:?}", r.time_online_s),
                format!("{:?}", r.time_total_s),
            ]
        }),
    )?;
    write_rows_csv(
        &dir.join("summary.csv"),
        &[
            "method", "trials", "diverged", "rmse_mean", "rmse_std", "me_mean", "me_std", "time_mean", "time_std",
        ],
        report.summary.iter().map(|s| {
            vec![
                s.method.name().to_string(),
                s.trials.to_string(),
                s.diverged.to_string(),
                format!("{:?}", s.rmse_mean),
                format!("{:?}", s.rmse_std),
                format!("{:?}", s.me_mean),
                format!("{:?}", s.me_std),
                format!("{:?}", s.time_mean),
                format!("{:?}", s.time_std),
            ]
        }),
    )?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
    write_result_json(&dir.join("summary.json"), &report.summary)?;
    Ok(())
}
