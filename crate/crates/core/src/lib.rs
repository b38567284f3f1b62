//! Kth-max and learnable sorted pooling for convolutional networks.
//!
//! The crate is a small, dependency-light CNN toolkit built around the
//! pooling operators in [`pooling`]:
//!
//! - [`tensor`]: dense `f64` tensors and valid-window iteration.
//! - [`pooling`]: max, average, kth-max and sorted pooling with exact backward passes.
//! - [`layers`]: convolution, ReLU, flatten, dense, softmax cross-entropy and a sequential graph.
//! - [`optim`]: SGD with momentum.
//! - [`gradcheck`]: central finite differences used to verify every backward pass.
//! - [`data`]: MNIST IDX loading, a synthetic dataset and seeded batching.
//! - [`rng`]: SplitMix64, so shuffles and initial weights are reproducible anywhere.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod pooling;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use pooling::{PoolConfig, PoolMode, PoolSaved, SortedPoolParams, WeightInit};
pub use tensor::{IndexTensor, Tensor};
