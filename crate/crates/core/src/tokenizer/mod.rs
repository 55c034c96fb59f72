//! Multi-scale VQ graph autoencoder: MPNN encoder, residual quantization
//! over a shared codebook, and a complete-graph GCN decoder.

mod config;
mod model;
mod quantize;
mod train;

pub use config::{DecoderConfig, EncoderConfig, TokenizerConfig};
pub use model::{
    mpnn_layer, reconstruction_loss, ForwardOutput, GcnLayer, GraphInputs, MpnnLayer, MultiScaleTokens,
    Reconstruction, Tokenizer,
};
pub use quantize::{downsample, quantize, upsample, vq_loss, CodeUsage};
pub use train::{
    evaluate_reconstruction, ReconstructionReport, TokenizerEpoch, TokenizerTrainConfig, TokenizerTrainer,
};
