//! Coverage-guided test generation for small neural networks.

pub mod campaign;
pub mod coverage;
pub mod error;
pub mod mcts;
pub mod mutation;
pub mod nn;
pub mod sampling;
pub mod search;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Shape, Tensor};
