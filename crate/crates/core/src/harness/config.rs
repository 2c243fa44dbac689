use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::ResourceInput;
use crate::error::{Error, Result};
use crate::estimator::{TrainConfig, DEFAULT_HIDDEN};
use crate::netsim::SimConfig;
use crate::optimizer::SolverParams;
use crate::schemes::{SchemeKind, DEFAULT_GRID_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// 12 cells, phases of 1000/2000/2000 slots.
    #[default]
    Full,
    /// 3 cells, phases of 200/400/400 slots.
    Desk,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Scale::Full),
            "desk" => Ok(Scale::Desk),
            other => Err(Error::Config(format!("unknown scale `{other}` (expected full|desk)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhaseConfig {
    /// Slots of sample collection (H0).
    pub collect: u64,
    /// Slots of online optimisation on the initial slice set (H1).
    pub optimize: u64,
    /// Slots after the slice-set change (H2).
    pub reconfigure: u64,
    pub h1_slices: Vec<u32>,
    pub h2_slices: Vec<u32>,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            collect: 1000,
            optimize: 2000,
            reconfigure: 2000,
            h1_slices: vec![1, 2, 4],
            h2_slices: vec![1, 2, 3, 4],
        }
    }
}

impl PhaseConfig {
    pub fn total(&self) -> u64 {
        self.collect + self.optimize + self.reconfigure
    }

    /// First slot of H2.
    pub fn change_slot(&self) -> u64 {
        self.collect + self.optimize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub train_fraction: f64,
    pub resource_input: ResourceInput,
    pub augment: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            hidden: DEFAULT_HIDDEN.to_vec(),
            train: TrainConfig::default(),
            train_fraction: 0.75,
            resource_input: ResourceInput::Share,
            augment: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub grid_step: f64,
    pub max_points: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            grid_step: 0.05,
            max_points: DEFAULT_GRID_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scale: Scale,
    /// Master seed; every other seed in the run is derived from it.
    pub seed: u64,
    pub sim: SimConfig,
    pub phases: PhaseConfig,
    pub schemes: Vec<SchemeKind>,
    pub solver: SolverParams,
    pub estimator: EstimatorConfig,
    pub oracle: OracleConfig,
    /// Trailing fraction of each phase used for converged statistics.
    pub convergence_fraction: f64,
    pub output_dir: PathBuf,
    /// Dump per-iteration optimizer traces.
    pub trace: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::for_scale(Scale::Full)
    }
}

impl ExperimentConfig {
    pub fn for_scale(scale: Scale) -> Self {
        let (sim, phases) = match scale {
            Scale::Full => (SimConfig::default(), PhaseConfig::default()),
            Scale::Desk => (
                SimConfig::desk(),
                PhaseConfig {
                    collect: 200,
                    optimize: 400,
                    reconfigure: 400,
                    ..PhaseConfig::default()
                },
            ),
        };
        ExperimentConfig {
            scale,
            seed: 1,
            sim,
            phases,
            schemes: vec![SchemeKind::Idla, SchemeKind::Traffic, SchemeKind::Oracle],
            solver: SolverParams::default(),
            estimator: EstimatorConfig::default(),
            oracle: OracleConfig::default(),
            convergence_fraction: 0.5,
            output_dir: PathBuf::from("out"),
            trace: false,
        }
    }

    /// Parses a TOML document layered over the defaults of its `scale`
    /// (or `scale_override`, when given).
    pub fn from_toml_str(text: &str, scale_override: Option<Scale>) -> Result<Self> {
        let overlay: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let scale = match scale_override {
            Some(s) => s,
            None => match overlay.get("scale") {
                Some(v) => v.clone().try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?,
                None => Scale::Full,
            },
        };
        let mut base = toml::Value::try_from(ExperimentConfig::for_scale(scale))
            .map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, overlay);
        let mut cfg: ExperimentConfig = base.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.scale = scale;
        Ok(cfg)
    }

    pub fn load(path: &Path, scale_override: Option<Scale>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, scale_override)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.solver.validate()?;
        let p = &self.phases;
        if p.collect <= self.sim.history_len as u64 || p.optimize == 0 || p.reconfigure == 0 {
            return Err(Error::Config(
                "phases must be non-empty and H0 longer than the observation history".into(),
            ));
        }
        crate::domain::validate_slice_set(&self.sim.specs_for(&p.h1_slices)?)?;
        crate::domain::validate_slice_set(&self.sim.specs_for(&p.h2_slices)?)?;
        if p.h1_slices == p.h2_slices {
            return Err(Error::Config("H2 slice set must differ from H1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("at least one scheme is required".into()));
        }
        if !(self.estimator.train_fraction > 0.0 && self.estimator.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
        }
        if !(self.convergence_fraction > 0.0 && self.convergence_fraction <= 1.0) {
            return Err(Error::Config("convergence_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(existing) => merge(existing, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}
