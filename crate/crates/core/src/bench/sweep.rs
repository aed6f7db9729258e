//! Dimension sweeps of the large-scale cubic sensor and the log-log time fit.

use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::experiment::{mean_std, run_experiment, Method};
use super::io::write_rows_csv;
use crate::error::{Error, Result};

/// One `(r, n)` point of a sweep; failures keep their message.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub r: usize,
    pub n: usize,
    pub time_s: f64,
    pub rmse: f64,
    pub me: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    /// Least-squares slope of `log time` against `log r`; `None` with fewer
    /// than two distinct successful dimensions.
    pub slope: Option<f64>,
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = logs.len() as f64;
    if logs.len() < 2 {
        return None;
    }
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Runs the Yau-Yau filter of `base` at each `(dims[i], samples[i])` and
/// writes `sweep.csv` into `base.out` when set. Per-trial outputs are not
/// written.
pub fn sweep_dimension(base: &ExperimentConfig, dims: &[usize], samples: &[usize]) -> Result<SweepReport> {
    if dims.len() != samples.len() || dims.is_empty() {
        return Err(Error::Config("dims and samples must be non-empty and of equal length".into()));
    }
    let mut points = Vec::with_capacity(dims.len());
    for (&r, &n) in dims.iter().zip(samples) {
        let mut cfg = base.clone();
        cfg.model.r = r;
        cfg.yauyau.n = n;
        cfg.yauyau.enabled = true;
        cfg.ekf.enabled = false;
        cfg.ukf.enabled = false;
        cfg.pf.enabled = false;
        cfg.kalman_bucy.enabled = false;
        cfg.out = None;
        let outcome = run_experiment(&cfg).and_then(|report| {
            let rows = report.method_rows(Method::YauYau);
            if let Some(bad) = rows.iter().find(|row| row.diverged) {
                return Err(Error::InvalidInput(format!(
                    "trial {} diverged: {}",
                    bad.trial,
                    bad.error.clone().unwrap_or_default()
                )));
            }
            let col = |f: fn(&super::experiment::MetricRow) -> f64| mean_std(&rows.iter().map(|r| f(r)).collect::<Vec<_>>()).0;
            Ok((col(|r| r.time_total_s), col(|r| r.rmse), col(|r| r.me)))
        });
        let point = match outcome {
            Ok((time_s, rmse, me)) => SweepPoint {
                r,
                n,
                time_s,
                rmse,
                me,
                error: None,
            },
            Err(e) => {
                log::warn!("sweep point r={r}, n={n} failed: {e}");
                SweepPoint {
                    r,
                    n,
                    time_s: f64::NAN,
                    rmse: f64::NAN,
                    me: f64::NAN,
                    error: Some(e.to_string()),
                }
            }
        };
        points.push(point);
    }
    let slope = fit_loglog_slope(
        &points
            .iter()
            .filter(|p| p.error.is_none())
            .map(|p| (p.r as f64, p.time_s))
            .collect::<Vec<_>>(),
    );
    let report = SweepReport { points, slope };
    if let Some(dir) = &base.out {
        write_sweep_csv(dir, &report)?;
    }
    Ok(report)
}

pub fn write_sweep_csv(dir: &Path, report: &SweepReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_rows_csv(
        &dir.join("sweep.csv"),
        &["r", "n", "time_s", "rmse", "me", "error"],
        report.points.iter().map(|p| {
            vec![
                p.r.to_string(),
                p.n.to_string(),
                format!("{:?}", p.time_s),
                format!("{:?}", p.rmse),
                format!("{:?}", p.me),
                p.error.clone().unwrap_or_default(),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::config::ExperimentKind;

    #[test]
    fn synthetic_power_law_slope() {
        let pts: Vec<(f64, f64)> = [10.0f64, 50.0, 100.0, 300.0].iter().map(|&r| (r, 0.03 * r.powf(1.2))).collect();
        assert!((fit_loglog_slope(&pts).unwrap() - 1.2).abs() < 1e-6);
    }

    #[test]
    fn degenerate_fits_are_absent() {
        assert_eq!(fit_loglog_slope(&[(10.0, 1.0)]), None);
        assert_eq!(fit_loglog_slope(&[(10.0, 1.0), (10.0, 2.0)]), None);
        assert_eq!(fit_loglog_slope(&[]), None);
    }

    #[test]
    fn small_sweep_writes_csv() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::preset(ExperimentKind::LargeScale);
        cfg.trials = 1;
        cfg.simulation.horizon = 0.2;
        cfg.simulation.steps = 20;
        cfg.out = Some(dir.path().to_path_buf());
        let report = sweep_dimension(&cfg, &[2, 4], &[20, 30]).unwrap();
        assert_eq!(report.points.len(), 2);
        assert!(report.points.iter().all(|p| p.error.is_none() && p.rmse.is_finite()));
        assert!(report.slope.is_some());
        let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(sweep_dimension(&cfg, &[2], &[]).is_err());
    }
}
