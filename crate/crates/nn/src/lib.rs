//! Minimal reverse-mode differentiation for the reconstruction models:
//! dense `f64` tensors, a recording [`Graph`], parameter stores with binary
//! checkpoints, Adam and finite-difference gradient checks.

pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;

pub use error::{NnError, Result};
pub use graph::{CustomOp, Gradients, Graph, Unary, Var};
pub use kernels::Padding;
pub use optim::Adam;
pub use params::{Bound, Checkpoint, ParamStore};
pub use tensor::Tensor;
