//! Minimal reverse-mode automatic differentiation over dense row-major
//! tensors. The operation set is exactly what the conformer encoder and the
//! contrastive loss need; new differentiable functions can be plugged in
//! through [`CustomOp`].
//!
//! Graphs are tapes: nodes are appended in evaluation order, so the tape is
//! already topologically sorted and `backward` walks it once in reverse.

mod adam;
mod graph;
mod kernels;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use graph::{attention_weights, CustomOp, Gradients, Graph, Mode, Var};
pub use params::{Param, ParamStore};
pub use tensor::{DType, Real, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("backward root must be scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("non-finite gradient for parameter {param}")]
    NonFiniteGradient { param: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> AutodiffError {
    AutodiffError::Shape {
        op,
        detail: detail.into(),
    }
}
