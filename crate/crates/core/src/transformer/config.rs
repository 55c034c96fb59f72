use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformerConfig {
    pub blocks: usize,
    pub hidden: usize,
    pub heads: usize,
    /// Must equal `hidden`: level embeddings are added to the token embeddings.
    pub level_embedding_dim: usize,
    pub layer_dropout: f64,
    pub conditional_dropout: f64,
    pub token_dropout: f64,
    pub vocab: usize,
    pub class_count: usize,
    /// Rows in the level-embedding table, i.e. the most scales a graph may have.
    pub max_levels: usize,
    pub mlp_ratio: usize,
    pub temperature_init: f64,
    pub layer_norm_eps: f64,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self {
            blocks: 8,
            hidden: 256,
            heads: 8,
            level_embedding_dim: 256,
            layer_dropout: 0.1,
            conditional_dropout: 0.1,
            token_dropout: 0.05,
            vocab: 1024,
            class_count: 1,
            max_levels: 32,
            mlp_ratio: 4,
            temperature_init: 10.0,
            layer_norm_eps: 1e-6,
        }
    }
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.hidden == 0 || self.heads == 0 || self.vocab == 0 || self.mlp_ratio == 0 {
            return Err(Error::Config("transformer sizes must be positive".into()));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if self.level_embedding_dim != self.hidden {
            return Err(Error::Config(format!(
                "level embedding dim {} must equal hidden size {}",
                self.level_embedding_dim, self.hidden
            )));
        }
        if self.class_count == 0 || self.max_levels == 0 {
            return Err(Error::Config("class count and level count must be positive".into()));
        }
        for (name, p) in [
            ("layer_dropout", self.layer_dropout),
            ("conditional_dropout", self.conditional_dropout),
            ("token_dropout", self.token_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is outside [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Top-k / nucleus sampling settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub top_k: usize,
    pub top_p: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { top_k: 50, top_p: 0.95 }
    }
}
