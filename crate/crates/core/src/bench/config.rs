//! Experiment configuration: built-in presets overridden by a TOML file.
//!
//! A file picks a preset with `experiment = "..."` and overrides any key;
//! unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, UkfParams};
use crate::error::{Error, Result};
use crate::filter::{FilterConfig, RestartInit};
use crate::kernel::{KernelSpec, DEFAULT_BOUNDARY_TOL};
use crate::models::{
    make_cubic_sensor, make_double_well, make_linear, make_scaled_cubic_1d, DynamicsModel, ObsEval,
    SimulationConfig,
};
use crate::qmc::SequenceKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    LargeScale,
    SmallCubic,
    DoubleWell,
    Linear,
    Custom,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::LargeScale => "large_scale",
            ExperimentKind::SmallCubic => "small_cubic",
            ExperimentKind::DoubleWell => "double_well",
            ExperimentKind::Linear => "linear",
            ExperimentKind::Custom => "custom",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "large_scale" => Ok(ExperimentKind::LargeScale),
            "small_cubic" => Ok(ExperimentKind::SmallCubic),
            "double_well" => Ok(ExperimentKind::DoubleWell),
            "linear" => Ok(ExperimentKind::Linear),
            "custom" => Ok(ExperimentKind::Custom),
            other => Err(Error::Config(format!("unknown experiment `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    CubicSensor,
    ScaledCubic1d,
    DoubleWell,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: ModelKind,
    pub r: usize,
}

impl ModelSection {
    pub fn build(&self) -> Result<DynamicsModel> {
        let fixed_scalar = |name: &str| {
            if self.r == 1 {
                Ok(())
            } else {
                Err(Error::Config(format!("model `{name}` is one-dimensional, got r = {}", self.r)))
            }
        };
        if self.r == 0 {
            return Err(Error::Config("model dimension must be positive".into()));
        }
        Ok(match self.name {
            ModelKind::CubicSensor => make_cubic_sensor(self.r),
            ModelKind::ScaledCubic1d => {
                fixed_scalar("scaled_cubic_1d")?;
                make_scaled_cubic_1d()
            }
            ModelKind::DoubleWell => {
                fixed_scalar("double_well")?;
                make_double_well()
            }
            ModelKind::Linear => make_linear(self.r),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub horizon: f64,
    pub steps: usize,
    /// Initial state; when absent each trial draws `x0 ~ N(0, I)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    pub obs_eval: ObsEval,
}

impl SimulationSection {
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YauYauSection {
    pub enabled: bool,
    pub n: usize,
    pub half_width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_half_width: Option<f64>,
    pub restart_interval: usize,
    pub order: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip: Option<u64>,
    pub init_std: f64,
    pub boundary_tol: f64,
    pub restart_init: RestartInit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Toggle {
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UkfSection {
    pub enabled: bool,
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PfSection {
    pub enabled: bool,
    pub particles: usize,
    pub ess_fraction: f64,
}

/// Everything needed to reproduce one multi-trial comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub trials: usize,
    pub seed: u64,
    /// Output directory; nothing is written when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Also write per-trial truth, observation and estimate CSVs.
    pub write_estimates: bool,
    /// Initial-belief standard deviation shared by the baselines.
    pub baseline_init_std: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op_cache: Option<PathBuf>,
    pub model: ModelSection,
    pub simulation: SimulationSection,
    pub yauyau: YauYauSection,
    pub ekf: Toggle,
    pub ukf: UkfSection,
    pub pf: PfSection,
    pub kalman_bucy: Toggle,
}

fn yauyau_section(n: usize, half_width: f64, restart_interval: usize, sequence: Option<SequenceKind>) -> YauYauSection {
    YauYauSection {
        enabled: true,
        n,
        half_width,
        global_half_width: None,
        restart_interval,
        order: 1,
        sequence,
        skip: None,
        init_std: 1.0,
        boundary_tol: DEFAULT_BOUNDARY_TOL,
        restart_init: RestartInit::Gaussian,
    }
}

/// Sample count paired with each large-scale dimension.
pub fn large_scale_samples(r: usize) -> usize {
    match r {
        0..=10 => 100,
        11..=50 => 300,
        51..=100 => 500,
        101..=300 => 800,
        301..=600 => 1000,
        _ => 2000,
    }
}

impl ExperimentConfig {
    pub fn preset(kind: ExperimentKind) -> Self {
        let ukf = UkfParams::default();
        let mut cfg = Self {
            experiment: kind,
            trials: 20,
            seed: 2024,
            out: None,
            write_estimates: false,
            baseline_init_std: 1.0,
            op_cache: None,
            model: ModelSection {
                name: ModelKind::ScaledCubic1d,
                r: 1,
            },
            simulation: SimulationSection {
                horizon: 10.0,
                steps: 1000,
                x0: Some(vec![0.5]),
                obs_eval: ObsEval::Post,
            },
            yauyau: yauyau_section(200, 4.5, 16, Some(SequenceKind::Halton)),
            ekf: Toggle { enabled: true },
            ukf: UkfSection {
                enabled: true,
                alpha: ukf.alpha,
                beta: ukf.beta,
                kappa: ukf.kappa,
            },
            pf: PfSection {
                enabled: true,
                particles: 200,
                ess_fraction: 0.5,
            },
            kalman_bucy: Toggle { enabled: false },
        };
        match kind {
            ExperimentKind::SmallCubic | ExperimentKind::Custom => {}
            ExperimentKind::DoubleWell => {
                cfg.model.name = ModelKind::DoubleWell;
                cfg.simulation.horizon = 5.0;
                cfg.simulation.steps = 500;
                cfg.simulation.x0 = Some(vec![0.0]);
                cfg.yauyau = yauyau_section(300, 10.0, 1, Some(SequenceKind::Halton));
                cfg.pf.particles = 300;
            }
            ExperimentKind::Linear => {
                cfg.model.name = ModelKind::Linear;
                cfg.simulation.x0 = None;
                cfg.yauyau = yauyau_section(300, 5.0, 1, Some(SequenceKind::Halton));
                cfg.ekf.enabled = false;
                cfg.ukf.enabled = false;
                cfg.pf.enabled = false;
                cfg.kalman_bucy.enabled = true;
            }
            ExperimentKind::LargeScale => {
                cfg.model = ModelSection {
                    name: ModelKind::CubicSensor,
                    r: 10,
                };
                cfg.simulation.x0 = None;
                cfg.yauyau = yauyau_section(large_scale_samples(10), 0.3, 2, Some(SequenceKind::Sobol));
                cfg.ekf.enabled = false;
                cfg.ukf.enabled = false;
                cfg.pf.enabled = false;
            }
        }
        cfg
    }

    /// Parses TOML text on top of the preset named by its `experiment` key
    /// (`custom` when absent).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let kind = match user.get("experiment") {
            None => ExperimentKind::Custom,
            Some(toml::Value::String(s)) => s.parse()?,
            Some(_) => return Err(Error::Config("`experiment` must be a string".into())),
        };
        let base = toml::Table::try_from(Self::preset(kind)).map_err(|e| Error::Config(e.to_string()))?;
        let merged = merge_tables(base, user);
        let cfg: Self = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.simulation.steps == 0 || !(self.simulation.horizon > 0.0) {
            return Err(Error::Config("simulation needs steps >= 1 and horizon > 0".into()));
        }
        let model = self.model.build()?;
        if let Some(x0) = &self.simulation.x0 {
            if x0.len() != model.r() {
                return Err(Error::Config(format!(
                    "x0 has {} entries but the model has r = {}",
                    x0.len(),
                    model.r()
                )));
            }
        }
        if self.yauyau.enabled {
            self.filter_config()?;
        }
        if self.pf.enabled && self.pf.particles < 2 {
            return Err(Error::Config("pf.particles must be at least 2".into()));
        }
        if self.kalman_bucy.enabled && model.linear().is_none() {
            return Err(Error::Config(format!(
                "kalman_bucy needs a linear model, `{}` is not",
                model.name()
            )));
        }
        self.baseline_config(0).validate()
    }

    pub fn build_model(&self) -> Result<DynamicsModel> {
        self.model.build()
    }

    pub fn simulation_config(&self, trial: u64) -> SimulationConfig {
        let mut sim = SimulationConfig::new(self.simulation.horizon, self.simulation.steps, self.seed);
        sim.trial = trial;
        sim.obs_eval = self.simulation.obs_eval;
        sim
    }

    pub fn filter_config(&self) -> Result<FilterConfig> {
        let y = &self.yauyau;
        let dt = self.simulation.dt();
        let cfg = FilterConfig {
            n: y.n,
            half_width: y.half_width,
            global_half_width: y.global_half_width,
            restart_interval: y.restart_interval,
            kernel: KernelSpec::new(y.order, dt)?,
            sequence: y.sequence,
            skip: y.skip,
            init_std: y.init_std,
            seed: self.seed,
            boundary_tol: y.boundary_tol,
            restart_init: y.restart_init,
            x0_guess: None,
            op_cache: self.op_cache.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn baseline_config(&self, trial: u64) -> BaselineConfig {
        let mut cfg = BaselineConfig::new(self.simulation.dt());
        cfg.init_std = self.baseline_init_std;
        cfg.ukf = UkfParams {
            alpha: self.ukf.alpha,
            beta: self.ukf.beta,
            kappa: self.ukf.kappa,
        };
        cfg.seed = self.seed;
        cfg.trial = trial;
        cfg.ess_fraction = self.pf.ess_fraction;
        cfg
    }
}

fn merge_tables(mut base: toml::Table, user: toml::Table) -> toml::Table {
    for (key, value) in user {
        match (base.remove(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => {
                base.insert(key, toml::Value::Table(merge_tables(b, u)));
            }
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
    base
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_roundtrip_through_toml() {
        for kind in [
            ExperimentKind::LargeScale,
            ExperimentKind::SmallCubic,
            ExperimentKind::DoubleWell,
            ExperimentKind::Linear,
            ExperimentKind::Custom,
        ] {
            let cfg = ExperimentConfig::preset(kind);
            cfg.validate().unwrap();
            let text = cfg.to_toml_string().unwrap();
            assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn overrides_apply_on_top_of_preset() {
        let cfg = ExperimentConfig::from_toml_str(
            "experiment = \"double_well\"\ntrials = 3\n[yauyau]\nn = 50\n[pf]\nenabled = false\n",
        )
        .unwrap();
        assert_eq!(cfg.trials, 3);
        assert_eq!(cfg.yauyau.n, 50);
        assert_eq!(cfg.yauyau.half_width, 10.0);
        assert!(!cfg.pf.enabled);
        assert_eq!(cfg.model.name, ModelKind::DoubleWell);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            ExperimentConfig::from_toml_str("trails = 3\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_toml_str("[yauyau]\nradius = 3.0\n"),
            Err(Error::Config(_))
        ));
        assert!(ExperimentConfig::from_toml_str("experiment = \"huge\"\n").is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("trials = 0\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[kalman_bucy]\nenabled = true\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[model]\nname = \"double_well\"\nr = 2\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[simulation]\nx0 = [1.0, 2.0]\n").is_err());
    }

    #[test]
    fn large_scale_sample_table() {
        let pairs: Vec<usize> = [10, 50, 100, 300, 600, 1000].iter().map(|&r| large_scale_samples(r)).collect();
        assert_eq!(pairs, vec![100, 300, 500, 800, 1000, 2000]);
    }
}
