//! Dense f64 tensors, a reverse-mode tape, the layers the model is built
//! from, Adam, finite-difference checking and the checkpoint container.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod params;
pub mod tensor;

use thiserror::Error;

pub use adam::{Adam, AdamState};
pub use graph::{AttnMask, Graph, Var};
pub use params::{Gradients, ParamId, ParamStore};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("model width {width} is not divisible by {heads} heads")]
    WidthNotDivisible { width: usize, heads: usize },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("unknown parameter {0}")]
    UnknownParam(String),
}
