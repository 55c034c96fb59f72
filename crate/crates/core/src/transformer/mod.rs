//! Next-scale prediction: a decoder-only transformer that emits each token
//! map in one step, conditioned on all coarser maps.

mod config;
mod generate;
mod mask;
mod model;
mod sampling;
mod train;

pub use config::{SamplingConfig, TransformerConfig};
pub use generate::{generate_graph, Generation, SizeHistogram};
pub use mask::{build_block_causal_mask, BlockMask};
pub use model::{next_scale_loss, KvCache, ScaleTransformer};
pub use sampling::{filter_top_k_top_p, sample_index};
pub use train::{
    evaluate_tokens, tokenize_dataset, TokenizedGraph, TransformerEpoch, TransformerTrainConfig, TransformerTrainer,
};
