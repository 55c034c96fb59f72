//! Whole-run configuration, read from TOML. Every field has a default, so an
//! empty file gives the reference hyperparameters.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CommunityParams, DatasetSpec};
use crate::metrics::MmdConfig;
use crate::schedule::ScheduleConfig;
use crate::tokenizer::{TokenizerConfig, TokenizerTrainConfig};
use crate::transformer::{SamplingConfig, TransformerConfig, TransformerTrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// `community_small` or `from_file`.
    pub name: String,
    pub split_fraction: f64,
    pub split_seed: u64,
    /// 1 for unconditional generation.
    pub class_count: usize,
    /// Graphs generated for `community_small`.
    pub count: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub community: CommunityParams,
    /// Source file for `from_file`.
    pub path: Option<PathBuf>,
}

impl DatasetConfig {
    pub fn spec(&self) -> DatasetSpec {
        DatasetSpec {
            name: self.name.clone(),
            split_fraction: self.split_fraction,
            rng_seed: self.split_seed,
            class_count: self.class_count,
        }
    }
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            name: "community_small".into(),
            split_fraction: 0.8,
            split_seed: 0,
            class_count: 1,
            count: 100,
            min_nodes: 12,
            max_nodes: 20,
            community: CommunityParams::default(),
            path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Dataset files; unset means the `MAG_DATA_DIR` environment variable, then `data`.
    pub data_dir: Option<PathBuf>,
    /// Checkpoints and logs.
    pub run_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            run_dir: PathBuf::from("runs"),
        }
    }
}

pub const DATA_DIR_ENV: &str = "MAG_DATA_DIR";

impl PathsConfig {
    pub fn data_dir(&self) -> PathBuf {
        self.data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"))
    }

    pub fn dataset_file(&self) -> PathBuf {
        self.data_dir().join("train.jsonl")
    }

    pub fn tokenizer_checkpoint(&self) -> PathBuf {
        self.run_dir.join("tokenizer.ckpt")
    }

    pub fn transformer_checkpoint(&self) -> PathBuf {
        self.run_dir.join("transformer.ckpt")
    }

    pub fn log(&self, stage: &str) -> PathBuf {
        self.run_dir.join(format!("{stage}_log.csv"))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Model initialisation and generation seed.
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub schedule: ScheduleConfig,
    pub tokenizer: TokenizerConfig,
    pub tokenizer_training: TokenizerTrainConfig,
    pub transformer: TransformerConfig,
    pub transformer_training: TransformerTrainConfig,
    pub sampling: SamplingConfig,
    pub evaluation: MmdConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Use `seed` for initialisation, both training stages and generation.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.tokenizer_training.seed = seed;
        self.transformer_training.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.tokenizer.validate()?;
        self.transformer.validate()?;
        if self.transformer.vocab != self.tokenizer.codebook_size {
            return Err(Error::Config(format!(
                "transformer vocabulary {} differs from codebook size {}",
                self.transformer.vocab, self.tokenizer.codebook_size
            )));
        }
        if self.transformer.class_count != self.dataset.class_count {
            return Err(Error::Config(format!(
                "transformer class count {} differs from dataset class count {}",
                self.transformer.class_count, self.dataset.class_count
            )));
        }
        if !(0.0 < self.dataset.split_fraction && self.dataset.split_fraction <= 1.0) {
            return Err(Error::Config("split fraction must be in (0, 1]".into()));
        }
        if self.dataset.min_nodes > self.dataset.max_nodes {
            return Err(Error::Config("min_nodes exceeds max_nodes".into()));
        }
        if self.schedule.growth < 2 || self.schedule.base_set.first() != Some(&1) {
            return Err(Error::Config("schedule needs growth ≥ 2 and a base set starting at 1".into()));
        }
        if !(self.sampling.top_k >= 1 && 0.0 < self.sampling.top_p && self.sampling.top_p <= 1.0) {
            return Err(Error::Config("top_k must be ≥ 1 and top_p in (0, 1]".into()));
        }
        if self.evaluation.sigma <= 0.0 || self.evaluation.clustering_bins == 0 {
            return Err(Error::Config("MMD needs a positive bandwidth and at least one bin".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_reference_values() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.tokenizer.encoder.mpnn_layers, 4);
        assert_eq!(c.tokenizer.decoder.gcn_layers, 4);
        assert_eq!(c.tokenizer.encoder.hidden_dim, 32);
        assert_eq!(c.tokenizer.encoder.latent_dim, 16);
        assert_eq!(c.tokenizer.codebook_size, 1024);
        assert_eq!(c.tokenizer.commitment, 0.25);
        assert_eq!(c.tokenizer.gamma, 0.1);
        assert_eq!(c.transformer.blocks, 8);
        assert_eq!(c.transformer.hidden, 256);
        assert_eq!(c.transformer.heads, 8);
        assert_eq!(c.transformer.level_embedding_dim, 256);
        assert_eq!(c.transformer.layer_dropout, 0.1);
        assert_eq!(c.transformer.conditional_dropout, 0.1);
        assert_eq!(c.transformer.token_dropout, 0.05);
        for opt in [c.tokenizer_training.optimizer, c.transformer_training.optimizer] {
            assert_eq!((opt.lr, opt.weight_decay, opt.beta1, opt.beta2), (3e-5, 1e-2, 0.9, 0.99));
        }
        assert_eq!(c.tokenizer_training.batch_size, 12);
        assert_eq!(c.transformer_training.epochs, 100);
        assert_eq!((c.sampling.top_k, c.sampling.top_p), (50, 0.95));
    }

    #[test]
    fn round_trip_and_rejections() {
        let mut c = RunConfig::default();
        c.set_seed(9);
        c.transformer.hidden = 64;
        c.transformer.level_embedding_dim = 64;
        c.dataset.path = Some("x.jsonl".into());
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert!(RunConfig::from_toml("[tokenizer]\nbogus = 1").is_err());
        assert!(RunConfig::from_toml("[dataset]\nbogus = 1").is_err());
        assert!(RunConfig::from_toml("[transformer]\nvocab = 12").is_err());
        let partial = RunConfig::from_toml("[tokenizer_training.optimizer]\nlr = 0.001").unwrap();
        assert_eq!(partial.tokenizer_training.optimizer.lr, 1e-3);
        assert_eq!(partial.tokenizer_training.optimizer.weight_decay, 1e-2);
    }
}
