//! Minimal differentiable kernel: tensors, a reverse-mode tape, Adam,
//! finite-difference checking and checkpoints.

mod adam;
pub mod catalog;
mod checkpoint;
mod gradcheck;
pub mod interp;
mod params;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{check_gradients, check_gradients_with, relative_error, GradCheckOptions, GradCheckReport};
pub use interp::InterpMode;
pub use params::{ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
