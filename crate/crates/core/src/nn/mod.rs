//! Minimal dense numeric substrate: tensors, MLP layers, a reverse-mode
//! gradient tape, and the Adam optimizer. Everything the prediction models
//! need and nothing more.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod params;
pub mod tape;
pub mod tensor;

use thiserror::Error;

/// Scalar storage type. Tests and the shipped default use f64; the `f32`
/// feature trades gradient-check fidelity for memory.
#[cfg(feature = "f32")]
pub type Real = f32;
#[cfg(not(feature = "f32"))]
pub type Real = f64;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("tape is stale: parameters were mutated after the forward pass")]
    StaleTape,
    #[error("model is not fitted")]
    NotFitted,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub use adam::{adam_step, AdamState};
pub use params::{init_layer, Activation, Mlp, MlpLayer, ParamId, Params};
pub use tape::{mlp_forward, Gradients, Tape, ValueId};
pub use tensor::{softmax_rows, Tensor2D};
