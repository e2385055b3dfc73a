//! Reverse-mode automatic differentiation over dense `f64` tensors.

mod adam;
mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use graph::{GainSource, Gradients, Graph, NodeId};
pub use params::ParameterSet;
pub use tensor::Tensor;
