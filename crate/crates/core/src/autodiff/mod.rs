//! Minimal reverse-mode automatic differentiation over dense tensors.
//!
//! Every operation returns a new [`Tensor`]; when any input requires a
//! gradient the result carries a tape node holding its parents and a
//! backward closure. [`Tensor::backward`] walks that DAG once in reverse
//! topological order.

mod grad_check;
mod ops;
mod tensor;

pub use grad_check::{grad_check, GradCheck, GradCheckReport};
pub use ops::DftPart;
pub use tensor::{BackwardArgs, BackwardFn, OpKind, Tensor};

