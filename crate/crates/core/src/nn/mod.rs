//! Tensors, reverse-mode gradients, losses and the training utilities
//! (Adam, global-norm clipping, weight averaging, checkpoints).

mod checkpoint;
mod functions;
mod graph;
mod optim;
mod param;
mod swa;
mod tensor;

pub use checkpoint::{CheckpointHeader, Checkpointable, ParamEntry};
pub use functions::{bce_loss, mse_loss, sigmoid};
pub use graph::{Gradients, Graph, Var};
pub use optim::{clip_global_norm, global_norm, Adam, AdamConfig};
pub use param::{Module, ParamId, Parameter};
pub use swa::SwaState;
pub use tensor::Tensor;
