//! Dense tensors and the differentiable primitive set used by every model.

mod tape;
mod tensor;

pub use tape::{grad, Gradients, Tape, Var};
pub use tensor::Tensor;
