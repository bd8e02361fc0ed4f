//! Minimal dense/convolutional tensor operations with reverse-mode
//! differentiation.
//!
//! The surface is intentionally small: exactly the operations needed to train
//! the semantic-communication classifier and to pull per-feature gradient
//! maps out of its encoder. Everything computes in `f64`; a tape is rebuilt
//! for every forward pass and owns all intermediate values, so distinct tapes
//! can run on distinct workers with no shared state.

mod kernels;
mod tape;
mod tensor;

pub use tape::{Gradients, NodeId, Tape};
pub use tensor::Tensor;
