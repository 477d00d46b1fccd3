//! Dense tensors, a reverse-mode tape, parameter storage and a
//! finite-difference gradient checker.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use params::ParamStore;
pub use tape::{Elementwise, Gradients, Tape, Var};
pub use tensor::{matmul, sigmoid, softmax_rows, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} does not match {len} values")]
    Shape { shape: Vec<usize>, len: usize },
    #[error("concat axis {axis} invalid for shape {shape:?}")]
    Axis { axis: usize, shape: Vec<usize> },
    #[error("{0}: empty input")]
    EmptyInput(&'static str),
    #[error("{op} expects {expected} operands, got {got}")]
    Arity { op: String, expected: usize, got: usize },
    #[error("class index {index} out of range for {classes} classes")]
    Label { index: usize, classes: usize },
    #[error("binary target {0} is not 0 or 1")]
    Target(f64),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("unknown parameter `{0}`")]
    MissingParam(String),
}
