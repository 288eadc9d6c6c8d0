//! Minimal deterministic tensor engine with reverse-mode autodiff.
//!
//! Covers exactly the operators the deraining networks need: 2D/3D
//! convolution, elementwise activations and arithmetic, concatenation,
//! reshape, nearest upsampling and mean/MSE reductions. Everything is
//! single-threaded, so identical inputs give bit-identical outputs.

pub mod conv;
mod element;
pub mod gradcheck;
mod graph;
mod optim;
mod params;
mod tensor;

pub use element::Element;
pub use gradcheck::{gradcheck, GradcheckConfig, GradcheckReport, ParamError};
pub use graph::{Gradients, Graph, Pointwise, Var};
pub use optim::{Optimizer, OptimizerConfig};
pub use params::{Initializer, ParamEntry, ParamStore, INIT_STD};
pub use tensor::Tensor;
