//! JSON experiment files: the run configuration keys at top level plus the
//! dataset, the search grid and a few experiment settings.

use std::fs;
use std::path::{Path, PathBuf};

use inas_core::active::RunConfig;
use inas_core::arch::{ArchPoint, BlockKind, BlockSpec, SearchGrid};
use inas_core::data::{self, Dataset, InputShape};
use inas_core::nn::DEFAULT_DROPOUT;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};
use crate::loaders;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Blobs { n_classes: usize, dim: usize, n_per_class: usize, spread: f64, seed: u64 },
    Csv {
        path: PathBuf,
        /// Reinterpret the feature columns as images.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shape: Option<InputShape>,
    },
    Idx { images: PathBuf, labels: PathBuf },
}

impl DatasetSource {
    /// Loads the dataset; relative paths are taken from `base`.
    pub fn load(&self, base: &Path) -> Result<Dataset> {
        match self {
            DatasetSource::Blobs { n_classes, dim, n_per_class, spread, seed } => {
                Ok(data::synth_blobs(*n_classes, *dim, *n_per_class, *spread, *seed)?)
            }
            DatasetSource::Csv { path, shape } => {
                let d = loaders::load_csv(base.join(path))?;
                match shape {
                    Some(s) => loaders::reshape(d, *s),
                    None => Ok(d),
                }
            }
            DatasetSource::Idx { images, labels } => loaders::load_idx(base.join(images), base.join(labels)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub block_kind: BlockKind,
    pub base_width: usize,
    pub n_blocks: usize,
    pub n_stacks: usize,
    #[serde(default = "two")]
    pub beta: usize,
    #[serde(default = "two")]
    pub alpha: usize,
}

fn two() -> usize {
    2
}

impl GridConfig {
    pub fn grid(&self) -> Result<SearchGrid> {
        let block = BlockSpec::new(self.block_kind, self.beta, self.alpha, self.base_width)?;
        Ok(SearchGrid::new(block, self.n_blocks, self.n_stacks)?)
    }
}

fn default_test_fraction() -> f64 {
    0.25
}

fn default_dropout() -> f64 {
    DEFAULT_DROPOUT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub dataset: DatasetSource,
    pub grid: GridConfig,
    /// Defaults to the smallest grid node.
    #[serde(default)]
    pub initial_arch: Option<ArchPoint>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
    /// Write a model checkpoint for every round.
    #[serde(default)]
    pub save_checkpoints: bool,
    #[serde(flatten)]
    pub run: RunConfig,
}

impl ExperimentConfig {
    /// Parses a config; a missing `candidate_train_cfg` becomes `train_cfg`
    /// truncated to a quarter of its epochs.
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let has_candidate = value.get("candidate_train_cfg").is_some();
        let mut cfg: ExperimentConfig = serde_json::from_value(value)?;
        if !has_candidate {
            cfg.run.candidate_train_cfg = cfg.run.train_cfg.truncated(cfg.run.train_cfg.epochs / 4);
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(AppError::io(path))?;
        Self::from_json(&text).map_err(AppError::json(path))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn initial_arch(&self) -> Result<ArchPoint> {
        let grid = self.grid.grid()?;
        Ok(self.initial_arch.unwrap_or_else(|| grid.smallest()))
    }

    pub fn arch_mode(&self) -> &'static str {
        if self.run.t_inas == 0 {
            "fixed"
        } else {
            "inas"
        }
    }

    /// Directory name of a run: `<name>-<strategy>-<mode>-seed<seed>`.
    pub fn run_label(&self) -> String {
        let name = self.name.as_deref().unwrap_or("run");
        format!("{name}-{}-{}-seed{}", self.run.strategy, self.arch_mode(), self.run.seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.run.validate()?;
        let grid = self.grid.grid()?;
        grid.check(self.initial_arch()?)?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(AppError::Data("test_fraction must lie in (0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(AppError::Data("dropout_rate must lie in [0, 1)".into()));
        }
        Ok(())
    }
}
