//! The three-stage MNIST network.
//!
//! `[Conv 3×3/s1 → ReLU → Pool 3×3/s2] × 3` with 8, 32 and 64 channels,
//! then `Flatten → Dense(→10)`. On 28×28 inputs the spatial extents run
//! 26 → 12 → 10 → 4 → 2; a 3×3 pool no longer fits a 2×2 map, so a stage
//! whose input is smaller than the pool kernel falls back to a 2×2/s2 pool
//! and the classifier sees 64·1·1 features.

use sortpool::layers::{Conv2d, Dense, Flatten, Layer, LayerGraph, Pool, Relu};
use sortpool::rng::SplitMix64;
use sortpool::tensor::valid_extent;
use sortpool::{PoolConfig, PoolMode};

use crate::config::ExperimentConfig;
use crate::HarnessError;

pub const CHANNELS: [usize; 3] = [8, 32, 64];
pub const CLASSES: usize = 10;
const CONV_KERNEL: usize = 3;
const POOL_KERNEL: usize = 3;
const FALLBACK_POOL_KERNEL: usize = 2;
const POOL_STRIDE: usize = 2;

/// Pool mode for a given window size. `KthMax`/`Sorted` ranks larger than a
/// fallback window are clamped to the window size.
fn mode_for_window(mode: PoolMode, window: usize) -> PoolMode {
    match mode {
        PoolMode::KthMax(k) => PoolMode::KthMax(k.min(window)),
        PoolMode::Sorted(k) => PoolMode::Sorted(k.min(window)),
        m => m,
    }
}

/// Pool kernel that fits an `h×w` map, or `None` if nothing does.
fn pool_kernel_for(h: usize, w: usize) -> Option<usize> {
    [POOL_KERNEL, FALLBACK_POOL_KERNEL]
        .into_iter()
        .find(|&k| valid_extent(h, k, POOL_STRIDE).is_some() && valid_extent(w, k, POOL_STRIDE).is_some())
}

/// Builds the network for `(height, width)` single-channel inputs.
///
/// Layer `i` draws its initial weights from `SplitMix64::derive(seed, i)`, so
/// conv and dense initial weights depend only on the seed, never on the pool mode.
pub fn build_network(cfg: &ExperimentConfig, input: (usize, usize)) -> Result<LayerGraph, HarnessError> {
    let (mut h, mut w) = input;
    let mut in_c = 1;
    let mut layers = Vec::new();
    for &out_c in &CHANNELS {
        let (Some(ch), Some(cw)) = (
            valid_extent(h, CONV_KERNEL, 1),
            valid_extent(w, CONV_KERNEL, 1),
        ) else {
            return Err(HarnessError::Architecture(format!("{h}x{w} map too small for a 3x3 convolution")));
        };
        let mut rng = SplitMix64::derive(cfg.seed, layers.len() as u64);
        layers.push(Layer::Conv2d(Conv2d::new(in_c, out_c, (CONV_KERNEL, CONV_KERNEL), 1, &mut rng)?));
        layers.push(Layer::Relu(Relu::default()));
        let k = pool_kernel_for(ch, cw)
            .ok_or_else(|| HarnessError::Architecture(format!("{ch}x{cw} map too small for a pooling stage")))?;
        let pool_cfg = PoolConfig::new((k, k), (POOL_STRIDE, POOL_STRIDE), mode_for_window(cfg.pool, k * k))?;
        layers.push(Layer::Pool(Pool::new(pool_cfg, out_c, cfg.weight_init)?));
        h = valid_extent(ch, k, POOL_STRIDE).expect("kernel fits");
        w = valid_extent(cw, k, POOL_STRIDE).expect("kernel fits");
        in_c = out_c;
    }
    layers.push(Layer::Flatten(Flatten::default()));
    let mut rng = SplitMix64::derive(cfg.seed, layers.len() as u64);
    layers.push(Layer::Dense(Dense::new(in_c * h * w, CLASSES, &mut rng)?));
    Ok(LayerGraph::new(layers))
}

/// Number of layers up to and including `Flatten`; their output is the embedding.
pub fn embedding_depth(graph: &LayerGraph) -> usize {
    graph
        .layers
        .iter()
        .position(|l| matches!(l, Layer::Flatten(_)))
        .map_or(graph.layers.len(), |i| i + 1)
}

/// Canonical architecture string; its hash guards checkpoints.
pub fn architecture_descriptor(cfg: &ExperimentConfig, input: (usize, usize)) -> String {
    format!(
        "conv{}x{}-{}-{};k{CONV_KERNEL};pool={};in={}x{};classes={CLASSES}",
        CHANNELS[0],
        CHANNELS[1],
        CHANNELS[2],
        POOL_KERNEL,
        crate::config::pool_name(cfg.pool),
        input.0,
        input.1,
    )
}

/// Number of learnable sorted-pooling weights in the graph.
pub fn pool_parameter_count(graph: &LayerGraph) -> usize {
    graph.sorted_pools().iter().map(|p| p.raw_weights.len()).sum()
}
