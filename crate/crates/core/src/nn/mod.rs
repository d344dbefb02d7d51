//! A small CPU autodiff engine: tensors, a reverse-mode tape with the
//! convolutional layers the networks need, parameter sets and Adam.
//!
//! Everything is generic over [`Real`] so the same code runs in `f32` for
//! training and in `f64` for finite-difference checks.

mod container;
mod conv;
mod graph;
mod optim;
mod params;
mod real;
mod tensor;

pub use graph::{power_iteration, Gradients, Graph, Var};
pub use optim::{Adam, AdamConfig};
pub use params::{normal_tensor, Bound, ParamSet};
pub use real::Real;
pub use tensor::Tensor;
pub use container::{Container, ContainerError, MAGIC};
