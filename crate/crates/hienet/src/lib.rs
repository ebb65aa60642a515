//! Desk-scale harness around `hienet-core`: cascade files and manifests,
//! a synthetic cascade generator, training, evaluation, ablations,
//! checkpoints and the command-line interface.

pub mod ablate;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod gradcheck;
pub mod pipeline;
pub mod synth;
pub mod train;

pub use error::{HarnessError, Result};
