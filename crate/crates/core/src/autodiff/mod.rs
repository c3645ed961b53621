//! Reverse-mode differentiation over dense row-major tensors.
//!
//! Operations are recorded on a [`Tape`] as they execute; [`Tape::backward`]
//! walks the tape once in reverse and returns a [`Gradients`] table for
//! every node that depends on a `requires_grad` leaf. Tensors are generic
//! over [`Scalar`] so the same primitives run in `f32` for training and
//! `f64` for finite-difference checks.

mod gemm;
mod optim;
mod tape;
mod tensor;

pub use gemm::gemm;
pub use optim::{cosine_lr, sgd_step, GradMap, OptimizerState};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Scalar, Tensor};
