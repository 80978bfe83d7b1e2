//! Low-rate DoS detection from packet traces.
//!
//! The toolkit reconstructs per-segment traffic features with two learned
//! models (a time-domain LSTM autoencoder and a frequency-domain
//! convolutional residual network) and flags segments whose reconstruction
//! error exceeds calibrated thresholds. A synthetic traffic workbench makes
//! every result reproducible from a single seed.

pub mod eval;
pub mod ingest;
pub mod nn;
pub mod persist;
pub mod pipeline;
pub mod reconstructor;
pub mod seed;
pub mod synth;

/// CLI entry point; returns the process exit code.
pub fn run_cli() -> i32 {
    0
}
