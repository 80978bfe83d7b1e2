//! Minimal deterministic neural-network engine.
//!
//! Three layer types (dense, LSTM with softsign squash, width-2 causal
//! conv1d), two losses (MSE, BCE), two optimizers (AdaGrad, Adam) and a
//! finite-difference gradient oracle. Everything is f64 and seeded; the
//! same seed and inputs give bit-identical forward, backward and update
//! results.

pub mod gradcheck;
pub mod layer;
pub mod loss;
pub mod matrix;
pub mod optim;

#[cfg(test)]
mod gradtests;

pub use layer::{glorot_uniform, sigmoid, softsign, Conv1d, Dense, Lstm, Param};
pub use loss::{bce_loss, mse_loss, BCE_CLIP};
pub use matrix::Matrix;
pub use optim::Optimizer;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}
