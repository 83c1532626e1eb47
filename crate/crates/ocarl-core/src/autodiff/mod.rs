//! Reverse-mode automatic differentiation on dense tensors.
//!
//! The engine is a tape: [`Graph`] records operations as they are built,
//! [`Graph::backward`] replays them in reverse. Everything the networks in
//! this crate need is a first-class op with an exact adjoint, including the
//! convolution, the attention softmax, and the tie-aware reductions.

pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod tensor;

pub use gradcheck::{grad_check, grad_check_graph};
pub use graph::{Graph, NodeId};
pub use tensor::Tensor;
