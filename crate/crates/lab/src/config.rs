//! TOML experiment configuration.
//!
//! ```toml
//! [data]
//! source = "synthetic"        # or "csv" with `path = "..."`
//! group_spread = 1.5
//!
//! [train]
//! epochs = 10
//!
//! [loss]
//! kind = "nuce"
//! lambda_c = 0.5
//!
//! [experiment]
//! folds = 5
//! seeds = [0, 1, 2]
//!
//! [sweep]
//! lambda_r = [0.5, 1.0]
//! ```
//!
//! Every field has a default, so an empty file is a valid config.

use std::path::{Path, PathBuf};

use nuce_core::data::SynthConfig;
use nuce_core::losses::{LossConfig, LossKind};
use nuce_core::trainer::{Schedule, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub source: DataSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub n_total: usize,
    pub positive_rate: f64,
    pub n_groups: usize,
    pub d_in: usize,
    pub class_separation: f64,
    pub overlap_noise: f64,
    pub group_spread: f64,
    /// Generator seed; when absent each run seed also seeds the generator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for DataSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        Self {
            source: DataSource::Synthetic,
            path: None,
            n_total: s.n_total,
            positive_rate: s.positive_rate,
            n_groups: s.n_groups,
            d_in: s.d_in,
            class_separation: s.class_separation,
            overlap_noise: s.overlap_noise,
            group_spread: s.group_spread,
            seed: None,
        }
    }
}

impl DataSection {
    pub fn synth(&self, run_seed: u64) -> SynthConfig {
        SynthConfig {
            n_total: self.n_total,
            positive_rate: self.positive_rate,
            n_groups: self.n_groups,
            d_in: self.d_in,
            class_separation: self.class_separation,
            overlap_noise: self.overlap_noise,
            group_spread: self.group_spread,
            seed: self.seed.unwrap_or(run_seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// `"cosine"` or `"constant"`.
    pub schedule: String,
    pub early_stop_patience: usize,
    /// Width of the tanh layer; 0 feeds features straight to the head.
    pub hidden_dim: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            schedule: "cosine".into(),
            early_stop_patience: t.early_stop_patience,
            hidden_dim: t.hidden_dim.unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    /// `nuce`, `cross_entropy`, `focal` or `center`.
    pub kind: String,
    pub lambda_r: f64,
    pub lambda_c: f64,
    pub gamma: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        let l = LossConfig::default();
        Self {
            kind: l.kind.name().into(),
            lambda_r: l.lambda_r,
            lambda_c: l.lambda_c,
            gamma: l.gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub folds: usize,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            folds: 5,
            seeds: vec![0, 1, 2],
        }
    }
}

/// Grid axes; an absent axis takes its single value from `[loss]`, and
/// an entirely absent section means [`default_sweep_grid`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_r: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_c: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub train: TrainSection,
    pub loss: LossSection,
    pub experiment: ExperimentSection,
    pub sweep: SweepSection,
}

/// `(lambda_r, lambda_c, gamma)` rows run by `sweep` when no grid is given.
pub fn default_sweep_grid() -> Vec<(f64, f64, f64)> {
    vec![
        (0.5, 0.5, 2.0),
        (1.0, 0.0, 2.0),
        (1.0, 0.5, 1.0),
        (1.0, 0.5, 2.0),
        (1.0, 1.0, 2.0),
        (1.5, 0.5, 2.0),
    ]
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            LabError::Config(msg) => LabError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        // relative CSV paths are taken relative to the config file
        if let (Some(p), Some(dir)) = (&cfg.data.path, path.parent()) {
            if p.is_relative() {
                cfg.data.path = Some(dir.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.data.source, &self.data.path) {
            (DataSource::Csv, None) => {
                return Err(LabError::Config(
                    "data.source = \"csv\" needs data.path".into(),
                ))
            }
            (DataSource::Synthetic, Some(_)) => {
                return Err(LabError::Config(
                    "data.path given but data.source is \"synthetic\"".into(),
                ))
            }
            _ => {}
        }
        if self.data.source == DataSource::Synthetic {
            self.data.synth(0).validate()?;
        }
        if self.experiment.seeds.is_empty() {
            return Err(LabError::Config(
                "experiment.seeds must not be empty".into(),
            ));
        }
        if self.experiment.folds < 2 {
            return Err(LabError::Config(format!(
                "experiment.folds must be at least 2, got {}",
                self.experiment.folds
            )));
        }
        self.train_config(0)?.validate()?;
        self.sweep_grid()?;
        Ok(())
    }

    pub fn loss_config(&self) -> Result<LossConfig> {
        let kind = LossKind::parse(&self.loss.kind)
            .ok_or_else(|| LabError::Config(format!("unknown loss kind `{}`", self.loss.kind)))?;
        let cfg = LossConfig {
            lambda_r: self.loss.lambda_r,
            lambda_c: self.loss.lambda_c,
            gamma: self.loss.gamma,
            kind,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Trainer settings for one run.
    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let schedule = match self.train.schedule.as_str() {
            "cosine" => Schedule::Cosine,
            "constant" => Schedule::Constant,
            other => return Err(LabError::Config(format!("unknown schedule `{other}`"))),
        };
        Ok(TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            schedule,
            early_stop_patience: self.train.early_stop_patience,
            seed,
            hidden_dim: (self.train.hidden_dim > 0).then_some(self.train.hidden_dim),
            loss: self.loss_config()?,
        })
    }

    pub fn sweep_grid(&self) -> Result<Vec<(f64, f64, f64)>> {
        let s = &self.sweep;
        if s.lambda_r.is_none() && s.lambda_c.is_none() && s.gamma.is_none() {
            return Ok(default_sweep_grid());
        }
        let axis = |name: &str, v: &Option<Vec<f64>>, fallback: f64| match v {
            Some(v) if v.is_empty() => Err(LabError::Config(format!("sweep.{name} is empty"))),
            Some(v) => Ok(v.clone()),
            None => Ok(vec![fallback]),
        };
        let rs = axis("lambda_r", &s.lambda_r, self.loss.lambda_r)?;
        let cs = axis("lambda_c", &s.lambda_c, self.loss.lambda_c)?;
        let gs = axis("gamma", &s.gamma, self.loss.gamma)?;
        let mut grid = Vec::new();
        for &r in &rs {
            for &c in &cs {
                for &g in &gs {
                    LossConfig::nuce(r, c, g)?;
                    grid.push((r, c, g));
                }
            }
        }
        Ok(grid)
    }

    /// The config with every default filled in, as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
