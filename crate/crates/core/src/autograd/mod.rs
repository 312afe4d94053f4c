//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] records operations in execution order. Values are stored in
//! double precision; only scalar broadcasting is supported.

mod backward;
mod check;
mod kernels;
mod ops;
mod tape;
mod tensor;

pub use check::{grad_check, grad_check_many, relative_error};
pub use ops::Activation;
pub use tape::{ConvGeometry, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
