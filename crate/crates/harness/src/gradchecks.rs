//! Gradient-check suite behind the `gradcheck` subcommand.
//!
//! Every check compares an analytic backward pass against central finite
//! differences on tie-free random inputs, using a random projection `Σ r ⊙ y`
//! as the scalar objective.

use sortpool::gradcheck::{compare, finite_diff, tie_free, GradReport, DEFAULT_STEP};
use sortpool::layers::{
    Layer, ParamKind,
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, relu_backward, relu_forward,
    softmax_cross_entropy,
};
use sortpool::pooling::{kth_max_backward, kth_max_forward, sorted_pool_backward, sorted_pool_forward};
use sortpool::rng::SplitMix64;
use sortpool::{PoolConfig, PoolMode, SortedPoolParams, Tensor};

use crate::config::{pool_name, ExperimentConfig};
use crate::network::build_network;
use crate::Result;

pub const OPERATOR_TOL: f64 = 1e-5;
pub const NETWORK_TOL: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub report: GradReport,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.report.max_relative_error < self.tolerance
    }
}

fn random(rng: &mut SplitMix64, shape: &[usize]) -> Result<Tensor> {
    let n = shape.iter().product();
    Ok(Tensor::from_values(shape, (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect())?)
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn check(out: &mut Vec<CheckResult>, name: String, analytic: &Tensor, numeric: &Tensor, tolerance: f64) -> Result<()> {
    out.push(CheckResult {
        name,
        report: compare(analytic, numeric)?,
        tolerance,
    });
    Ok(())
}

/// kth-max, sorted pooling (input and weights), conv, dense, ReLU and
/// softmax cross-entropy at `OPERATOR_TOL`.
pub fn operator_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = SplitMix64::new(seed);
    let mut out = Vec::new();
    let h = DEFAULT_STEP;

    for k in 1..=4 {
        let x = tie_free(&mut rng, &[2, 3, 7, 7])?;
        let cfg = PoolConfig::new((3, 3), (2, 2), PoolMode::KthMax(k))?;
        let (y, saved) = kth_max_forward(&x, &cfg)?;
        let r = random(&mut rng, y.shape())?;
        let analytic = kth_max_backward(&r, &saved, x.shape())?;
        let numeric = finite_diff(|t| kth_max_forward(t, &cfg).map_or(f64::NAN, |(y, _)| dot(&y, &r)), &x, h)?;
        check(&mut out, format!("kth_max k={k} input"), &analytic, &numeric, OPERATOR_TOL)?;
    }

    for k in [1, 2, 4, 9] {
        let x = tie_free(&mut rng, &[2, 3, 7, 7])?;
        let raw = random(&mut rng, &[3, k])?;
        let cfg = PoolConfig::new((3, 3), (2, 2), PoolMode::Sorted(k))?;
        let mut params = SortedPoolParams::new(raw.clone())?;
        let (y, saved) = sorted_pool_forward(&x, &params, &cfg)?;
        let r = random(&mut rng, y.shape())?;
        let grad_in = sorted_pool_backward(&r, &saved, &mut params, x.shape())?;
        let numeric_in = finite_diff(
            |t| sorted_pool_forward(t, &params, &cfg).map_or(f64::NAN, |(y, _)| dot(&y, &r)),
            &x,
            h,
        )?;
        let numeric_w = finite_diff(
            |w| {
                SortedPoolParams::new(w.clone())
                    .and_then(|p| sorted_pool_forward(&x, &p, &cfg))
                    .map_or(f64::NAN, |(y, _)| dot(&y, &r))
            },
            &raw,
            h,
        )?;
        check(&mut out, format!("sorted K={k} input"), &grad_in, &numeric_in, OPERATOR_TOL)?;
        check(&mut out, format!("sorted K={k} weights"), &params.grad, &numeric_w, OPERATOR_TOL)?;
    }

    {
        let x = random(&mut rng, &[2, 2, 6, 6])?;
        let w = random(&mut rng, &[3, 2, 3, 3])?;
        let b = random(&mut rng, &[3])?;
        let (y, saved) = conv2d_forward(&x, &w, &b, 1)?;
        let r = random(&mut rng, y.shape())?;
        let (gi, gw, gb) = conv2d_backward(&r, &saved, &w)?;
        let f = |x: &Tensor, w: &Tensor, b: &Tensor| conv2d_forward(x, w, b, 1).map_or(f64::NAN, |(y, _)| dot(&y, &r));
        check(&mut out, "conv2d input".into(), &gi, &finite_diff(|t| f(t, &w, &b), &x, h)?, OPERATOR_TOL)?;
        check(&mut out, "conv2d weight".into(), &gw, &finite_diff(|t| f(&x, t, &b), &w, h)?, OPERATOR_TOL)?;
        check(&mut out, "conv2d bias".into(), &gb, &finite_diff(|t| f(&x, &w, t), &b, h)?, OPERATOR_TOL)?;
    }

    {
        let x = random(&mut rng, &[3, 8])?;
        let w = random(&mut rng, &[5, 8])?;
        let b = random(&mut rng, &[5])?;
        let r = random(&mut rng, &[3, 5])?;
        let (gi, gw, gb) = dense_backward(&r, &x, &w)?;
        let f = |x: &Tensor, w: &Tensor, b: &Tensor| dense_forward(x, w, b).map_or(f64::NAN, |y| dot(&y, &r));
        check(&mut out, "dense input".into(), &gi, &finite_diff(|t| f(t, &w, &b), &x, h)?, OPERATOR_TOL)?;
        check(&mut out, "dense weight".into(), &gw, &finite_diff(|t| f(&x, t, &b), &w, h)?, OPERATOR_TOL)?;
        check(&mut out, "dense bias".into(), &gb, &finite_diff(|t| f(&x, &w, t), &b, h)?, OPERATOR_TOL)?;
    }

    {
        // Keep every value well clear of the kink at zero.
        let mut x = tie_free(&mut rng, &[4, 25])?;
        for v in x.data_mut() {
            if v.abs() < 1e-3 {
                *v += 2e-3;
            }
        }
        let r = random(&mut rng, x.shape())?;
        let analytic = relu_backward(&r, &x)?;
        let numeric = finite_diff(|t| dot(&relu_forward(t), &r), &x, h)?;
        check(&mut out, "relu".into(), &analytic, &numeric, OPERATOR_TOL)?;
    }

    {
        let logits = random(&mut rng, &[4, 10])?.scale(3.0);
        let labels = [0, 9, 3, 3];
        let (_, analytic) = softmax_cross_entropy(&logits, &labels)?;
        let numeric = finite_diff(|t| softmax_cross_entropy(t, &labels).map_or(f64::NAN, |(l, _)| l), &logits, h)?;
        check(&mut out, "softmax cross-entropy".into(), &analytic, &numeric, OPERATOR_TOL)?;
    }
    Ok(out)
}

/// The full network on a two-image tie-free batch, checked for every
/// parameter tensor at `NETWORK_TOL`.
///
/// The objective is a random projection of the logits rather than the loss:
/// its upstream gradient is O(1) instead of `(p − y)/B`, which keeps the
/// smallest deep-layer gradients well above the central-difference roundoff
/// floor (`~ε·|f|/h`). Cross-entropy is checked on its own above.
pub fn network_checks(mode: PoolMode, seed: u64) -> Result<Vec<CheckResult>> {
    let cfg = ExperimentConfig {
        pool: mode,
        seed,
        ..ExperimentConfig::default()
    };
    let mut graph = build_network(&cfg, (28, 28))?;
    let mut rng = SplitMix64::derive(seed, 0xe2e);
    // Nonzero biases so no pre-activation starts exactly at a ReLU kink, and
    // random pool weights so sorted layers are not at the uniform point.
    for p in graph.params_mut() {
        if p.kind != ParamKind::Weight {
            for v in p.value.data_mut() {
                *v = rng.uniform(-0.1, 0.1);
            }
        }
    }
    let x = tie_free(&mut rng, &[2, 1, 28, 28])?;
    let r = random(&mut rng, &[2, 10])?;

    graph.forward(&x)?;
    graph.backward(&r)?;
    let analytic: Vec<(String, Tensor, Tensor)> = graph
        .params_mut()
        .into_iter()
        .map(|p| (p.name, p.value.clone(), p.grad.clone()))
        .collect();

    // Layer owning each parameter tensor, in `params_mut` order.
    let owners: Vec<usize> = graph
        .layers
        .iter()
        .enumerate()
        .flat_map(|(i, l)| {
            let n = match l {
                Layer::Conv2d(_) | Layer::Dense(_) => 2,
                Layer::Pool(p) if p.params.is_some() => 1,
                _ => 0,
            };
            std::iter::repeat_n(i, n)
        })
        .collect();

    let mut probe = graph.clone();
    let mut out = Vec::new();
    for (i, (name, value, grad)) in analytic.iter().enumerate() {
        // Layers before the owner are unaffected by the probe; run them once.
        let owner = owners[i];
        let prefix = graph.infer_prefix(&x, owner)?;
        let numeric = finite_diff(
            |t| {
                probe.params_mut()[i].value.data_mut().copy_from_slice(t.data());
                probe.layers[owner..]
                    .iter()
                    .try_fold(prefix.clone(), |h, l| l.infer(&h))
                    .map_or(f64::NAN, |l| dot(&l, &r))
            },
            value,
            DEFAULT_STEP,
        )?;
        probe.params_mut()[i].value.data_mut().copy_from_slice(value.data());
        check(&mut out, format!("network[{}] {name}", pool_name(mode)), grad, &numeric, NETWORK_TOL)?;
    }
    Ok(out)
}
