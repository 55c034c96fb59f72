use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::InterpMode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub mpnn_layers: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            mpnn_layers: 4,
            hidden_dim: 32,
            latent_dim: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    pub gcn_layers: usize,
    pub hidden_dim: usize,
    /// Hidden widths of the pairwise edge MLP.
    pub edge_mlp_hidden: Vec<usize>,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            gcn_layers: 4,
            hidden_dim: 32,
            edge_mlp_hidden: vec![32],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenizerConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub codebook_size: usize,
    pub commitment: f64,
    /// Weight of the VQ term in the total objective.
    pub gamma: f64,
    pub node_weight: f64,
    pub edge_weight: f64,
    /// Quantize each downsampled latent directly instead of the running residual.
    pub independent_scales: bool,
    pub downsample: InterpMode,
    pub upsample: InterpMode,
    pub layer_norm_eps: f64,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            decoder: DecoderConfig::default(),
            codebook_size: 1024,
            commitment: 0.25,
            gamma: 0.1,
            node_weight: 1.0,
            edge_weight: 1.0,
            independent_scales: false,
            downsample: InterpMode::Area,
            upsample: InterpMode::Linear,
            layer_norm_eps: 1e-5,
        }
    }
}

impl TokenizerConfig {
    pub fn validate(&self) -> Result<()> {
        let e = &self.encoder;
        if e.mpnn_layers == 0 || e.hidden_dim == 0 || e.latent_dim == 0 {
            return Err(Error::Config("encoder layers and widths must be positive".into()));
        }
        let d = &self.decoder;
        if d.gcn_layers == 0 || d.hidden_dim == 0 || d.edge_mlp_hidden.contains(&0) {
            return Err(Error::Config("decoder layers and widths must be positive".into()));
        }
        if self.codebook_size == 0 {
            return Err(Error::Config("codebook must not be empty".into()));
        }
        Ok(())
    }
}
