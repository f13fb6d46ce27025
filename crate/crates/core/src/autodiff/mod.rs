//! Dense-tensor reverse-mode automatic differentiation.
//!
//! The tape records one node per tensor operation; gradients of a scalar
//! loss flow backward through the whole recorded graph, including graphs
//! spanning hundreds of composed solver steps. All arithmetic is f64:
//! the gradient-check tolerances are unreachable in single precision.

mod kernels;
mod tape;
mod tensor;

pub use kernels::Pad;
pub use tape::{checkpoint_free_forward, Gradients, Tape};
pub use tensor::Tensor;
