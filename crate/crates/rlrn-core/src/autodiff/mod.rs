//! Dense-tensor numerical core: reverse-mode autodiff, initialization and
//! the Adam optimizer. Everything trainable in the crate builds on this.

mod adam;
mod init;
pub mod linalg;
mod params;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use init::{xavier_conv, xavier_init};
pub use params::{ParamId, ParamSet};
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::Tensor;
