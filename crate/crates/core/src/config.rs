//! Experiment configuration files.
//!
//! Configs are TOML. Top-level keys hold run-wide settings; `[data]`,
//! `[model]`, `[optimizer]` and `[algorithm]` hold the rest. Unknown keys are
//! rejected. A minimal file:
//!
//! ```toml
//! rounds = 100
//!
//! [data]
//! dataset = "synthetic"
//!
//! [algorithm]
//! name = "waffle"
//! ```
//!
//! See the book's configuration chapter for every key and its default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Distribution;
use crate::error::{Error, Result};
use crate::model::{ModelKind, ModelSpec};
use crate::server::Algorithm;
use crate::weights::Schedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Synthetic,
    IdxMnist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub dataset: DatasetKind,
    #[serde(default = "default_distribution")]
    pub distribution: Distribution,
    #[serde(default = "default_input_dim")]
    pub input_dim: usize,
    #[serde(default = "default_per_class")]
    pub per_class: usize,
    #[serde(default = "default_spread")]
    pub spread: f64,
    #[serde(default)]
    pub images: Option<PathBuf>,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub samples_per_agent: Option<usize>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Give every agent a copy of Alice's data and sampling stream.
    #[serde(default)]
    pub replicate_alice: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_model_kind")]
    pub kind: ModelKind,
    #[serde(default)]
    pub hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: default_model_kind(),
            hidden: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "default_eta_l")]
    pub eta_l: f64,
    #[serde(default = "default_eta_g")]
    pub eta_g: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Fixed local step count; unset means one local epoch per round.
    #[serde(default)]
    pub local_steps: Option<usize>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            eta_l: default_eta_l(),
            eta_g: default_eta_g(),
            batch_size: default_batch_size(),
            local_steps: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Sigmoid,
    Constant,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub name: Algorithm,
    #[serde(default = "default_delta_omega")]
    pub delta_omega: f64,
    #[serde(default)]
    pub schedule_offset: i64,
    #[serde(default = "default_schedule_kind")]
    pub schedule: ScheduleKind,
    #[serde(default)]
    pub schedule_value: Option<f64>,
    #[serde(default)]
    pub schedule_table: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub rounds: usize,
    #[serde(default = "default_num_agents")]
    pub num_agents: usize,
    #[serde(default)]
    pub alice_index: usize,
    /// Run the whole procedure once per listed agent as Alice.
    #[serde(default)]
    pub alice_indices: Option<Vec<usize>>,
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
    /// One independent run per seed; empty means `[master_seed]`.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub algorithm: AlgorithmConfig,
}

fn default_distribution() -> Distribution {
    Distribution::A
}
fn default_input_dim() -> usize {
    16
}
fn default_per_class() -> usize {
    500
}
fn default_spread() -> f64 {
    1.0
}
fn default_train_fraction() -> f64 {
    0.8
}
fn default_model_kind() -> ModelKind {
    ModelKind::LinearSoftmax
}
fn default_eta_l() -> f64 {
    0.1
}
fn default_eta_g() -> f64 {
    1.0
}
fn default_batch_size() -> usize {
    32
}
fn default_delta_omega() -> f64 {
    3.2
}
fn default_schedule_kind() -> ScheduleKind {
    ScheduleKind::Sigmoid
}
fn default_num_agents() -> usize {
    10
}
fn default_master_seed() -> u64 {
    1
}

pub const NUM_CLASSES: usize = 10;

impl ExperimentConfig {
    /// A synthetic-data config with every default applied.
    pub fn synthetic(algorithm: Algorithm, distribution: Distribution, rounds: usize) -> Self {
        ExperimentConfig {
            rounds,
            num_agents: default_num_agents(),
            alice_index: 0,
            alice_indices: None,
            master_seed: default_master_seed(),
            seeds: Vec::new(),
            output_path: None,
            workers: None,
            data: DataConfig {
                dataset: DatasetKind::Synthetic,
                distribution,
                input_dim: default_input_dim(),
                per_class: default_per_class(),
                spread: default_spread(),
                images: None,
                labels: None,
                samples_per_agent: None,
                train_fraction: default_train_fraction(),
                replicate_alice: false,
            },
            model: ModelConfig::default(),
            optimizer: OptimizerConfig::default(),
            algorithm: AlgorithmConfig {
                name: algorithm,
                delta_omega: default_delta_omega(),
                schedule_offset: 0,
                schedule: default_schedule_kind(),
                schedule_value: None,
                schedule_table: None,
            },
        }
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::ConfigParse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.master_seed]
        } else {
            self.seeds.clone()
        }
    }

    pub fn alices(&self) -> Vec<usize> {
        self.alice_indices
            .clone()
            .unwrap_or_else(|| vec![self.alice_index])
    }

    pub fn model_spec(&self, input_dim: usize) -> ModelSpec {
        match self.model.kind {
            ModelKind::LinearSoftmax => ModelSpec::linear(input_dim, NUM_CLASSES),
            ModelKind::Mlp => ModelSpec::mlp(input_dim, self.model.hidden.clone(), NUM_CLASSES),
        }
    }

    pub fn schedule(&self) -> Schedule {
        let a = &self.algorithm;
        match a.schedule {
            ScheduleKind::Sigmoid => Schedule::Sigmoid {
                delta_omega: a.delta_omega,
                offset: a.schedule_offset,
            },
            ScheduleKind::Constant => Schedule::Constant {
                value: a.schedule_value.unwrap_or(1.0),
            },
            ScheduleKind::Table => Schedule::Table {
                values: a.schedule_table.clone().unwrap_or_default(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be > 0 (got {v})")))
            }
        };
        positive("optimizer.eta_l", self.optimizer.eta_l)?;
        positive("optimizer.eta_g", self.optimizer.eta_g)?;
        positive("algorithm.delta_omega", self.algorithm.delta_omega)?;
        positive("data.spread", self.data.spread)?;
        if self.optimizer.batch_size == 0 {
            return Err(Error::config("optimizer.batch_size", "must be >= 1"));
        }
        if self.optimizer.local_steps == Some(0) {
            return Err(Error::config("optimizer.local_steps", "must be >= 1"));
        }
        if self.num_agents == 0 {
            return Err(Error::config("num_agents", "must be >= 1"));
        }
        for &a in &self.alices() {
            if a >= self.num_agents {
                return Err(Error::config(
                    if self.alice_indices.is_some() { "alice_indices" } else { "alice_index" },
                    format!("{a} is out of range for {} agents", self.num_agents),
                ));
            }
        }
        if self.algorithm.name.distance_weighted() && self.num_agents < 2 {
            return Err(Error::config(
                "num_agents",
                "distance-weighted algorithms need at least 2 agents",
            ));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "must be >= 1"));
        }
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return Err(Error::config("data.train_fraction", "must lie in (0, 1)"));
        }
        if self.data.input_dim == 0 {
            return Err(Error::config("data.input_dim", "must be >= 1"));
        }
        if self.data.per_class == 0 {
            return Err(Error::config("data.per_class", "must be >= 1"));
        }
        if self.data.samples_per_agent == Some(0) {
            return Err(Error::config("data.samples_per_agent", "must be >= 1"));
        }
        if self.data.dataset == DatasetKind::IdxMnist {
            if self.data.images.is_none() {
                return Err(Error::config("data.images", "is required for idx_mnist"));
            }
            if self.data.labels.is_none() {
                return Err(Error::config("data.labels", "is required for idx_mnist"));
            }
        }
        let props = self.data.distribution.proportions();
        if props.len() != NUM_CLASSES {
            return Err(Error::config(
                "data.distribution",
                format!("needs {NUM_CLASSES} proportions, got {}", props.len()),
            ));
        }
        if props.iter().any(|p| p.is_nan() || *p < 0.0) || (props.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config(
                "data.distribution",
                "proportions must be non-negative and sum to 1",
            ));
        }
        if self.model.kind == ModelKind::Mlp && self.model.hidden.contains(&0) {
            return Err(Error::config("model.hidden", "layer widths must be >= 1"));
        }
        match self.algorithm.schedule {
            ScheduleKind::Constant if self.algorithm.schedule_value.is_none() => {
                return Err(Error::config(
                    "algorithm.schedule_value",
                    "is required for a constant schedule",
                ))
            }
            ScheduleKind::Table if self.algorithm.schedule_table.is_none() => {
                return Err(Error::config(
                    "algorithm.schedule_table",
                    "is required for a table schedule",
                ))
            }
            _ => {}
        }
        self.schedule().validate(self.rounds).map_err(|e| {
            let key = match self.algorithm.schedule {
                ScheduleKind::Sigmoid => "algorithm.delta_omega",
                ScheduleKind::Constant => "algorithm.schedule_value",
                ScheduleKind::Table => "algorithm.schedule_table",
            };
            Error::config(key, e.to_string())
        })?;
        Ok(())
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_toml_str(&text, path)
}
