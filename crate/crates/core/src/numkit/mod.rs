//! Dense 2-D tensors, a reverse-mode autodiff tape and the Adam optimizer.

mod adam;
pub mod gradcheck;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState, ParamSet};
pub use tape::{Elementwise, Tape, Unary, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
