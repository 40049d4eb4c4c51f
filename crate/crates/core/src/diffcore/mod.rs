//! Dense 2-D tensors with reverse-mode gradients, the parameter store with
//! Adam state, gradient clipping and the checkpoint format.

mod matrix;
mod params;
mod tape;

pub use matrix::Matrix;
pub use params::{AdamConfig, AdamStateData, Binding, Checkpoint, ParamStore, TensorData, CHECKPOINT_FORMAT};
pub use tape::{Tape, Var};
