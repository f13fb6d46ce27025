//! Differentiable 1D discontinuous Galerkin toolkit.
//!
//! Solves hyperbolic conservation laws (advection, Burgers, Euler) with a
//! nodal DG scheme whose artificial viscosity is pluggable: the classical
//! derivative-based and highest-modal-decay models, or a small convolutional
//! network trained by backpropagating a solution-quality cost through many
//! composed solver steps against a MUSCL finite-volume reference.

pub mod autodiff;
pub mod cost;
pub mod datagen;
pub mod dg;
pub mod equations;
pub mod fv;
pub mod mesh;
pub mod viscosity;
pub mod error;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
