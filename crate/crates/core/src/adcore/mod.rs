//! Dense `f64` tensors and a define-by-run reverse-mode tape.
//!
//! Every tensor on the tape is a matrix (`rows x cols`); scalars are `1 x 1`
//! and row vectors `1 x n`. The only broadcasting is "matrix op row-vector"
//! ([`Tape::add_row`], [`Tape::mul_row`]).

pub mod gradcheck;
mod kernels;
mod tape;
mod tensor;

pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
