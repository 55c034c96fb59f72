//! Next-scale autoregressive graph generation.
//!
//! A permutation-equivariant multi-scale VQ autoencoder turns each graph into
//! a coarse-to-fine stack of token maps over a shared codebook; a decoder-only
//! transformer with a block-causal mask then learns to emit whole token maps
//! one scale at a time. Everything numeric is generic over [`Scalar`]
//! (`f32` / `f64`); the aliases below fix the width.

pub mod config;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod nn;
pub mod numerics;
pub mod scalar;
pub mod schedule;
pub mod tokenizer;
pub mod transformer;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use graph::Graph;
pub use scalar::Scalar;
pub use schedule::{build_scale_schedule, ScaleSchedule, ScheduleConfig};

pub type Tensor64 = numerics::Tensor<f64>;
pub type Tensor32 = numerics::Tensor<f32>;
pub type Tape64 = numerics::Tape<f64>;
