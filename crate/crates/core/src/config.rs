//! Run configuration shared by the library and the command line, read from
//! one TOML file with optional sections.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::benchmarks::BenchmarkConfigs;
use crate::deploy::{BackupConfig, CemConfig, GradConfig};
use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShootConfig {
    pub samples: usize,
}

impl Default for ShootConfig {
    fn default() -> Self {
        ShootConfig { samples: 1000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub cem: CemConfig,
    pub grad: GradConfig,
    pub shoot: ShootConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    /// Closed-loop steps per episode.
    pub length: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { episodes: 20, length: 60 }
    }
}

/// One-factor sweeps around the `[train]` settings. Every listed value
/// yields one cell per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub gamma: Vec<f64>,
    pub k: Vec<f64>,
    pub hidden: Vec<Vec<usize>>,
    pub n_train: Vec<usize>,
    /// Seeds per cell; empty means the run seed only.
    pub seeds: Vec<u64>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig { gamma: vec![0.0, 0.5], k: vec![1.0, 500.0], hidden: Vec::new(), n_train: Vec::new(), seeds: Vec::new() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub backup: BackupConfig,
    pub planner: PlannerConfig,
    pub eval: EvalConfig,
    pub ablate: AblateConfig,
    pub benchmarks: BenchmarkConfigs,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}
