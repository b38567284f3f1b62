//! Experiment harness for kth-max and sorted pooling.
//!
//! Assembles the three-stage MNIST network, trains it with seeded SGD,
//! writes per-epoch metrics as CSV, compares pooling variants over paired
//! seeds and runs an episodic few-shot evaluation on held-out classes.

pub mod checkpoint;
pub mod config;
pub mod episodic;
pub mod gradchecks;
pub mod metrics;
pub mod network;
pub mod sweep;
pub mod train;

use std::path::PathBuf;

use thiserror::Error;

pub use checkpoint::CheckpointError;
pub use config::{ConfigError, DatasetKind, ExperimentConfig};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),

    #[error("data/model: {0}")]
    Core(#[from] sortpool::Error),

    #[error("architecture: {0}")]
    Architecture(String),

    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),

    #[error("training diverged at step {step}: non-finite values first appear in {layer}")]
    Diverged { step: usize, layer: String },

    #[error("episodic evaluation: {0}")]
    Episodic(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Process exit code per error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Core(_) | HarnessError::Architecture(_) => 3,
            HarnessError::Checkpoint(_) => 4,
            HarnessError::Diverged { .. } => 5,
            HarnessError::Episodic(_) => 6,
            HarnessError::Io { .. } | HarnessError::Csv(_) => 7,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
