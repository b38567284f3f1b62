//! Max, average, kth-max and learnable sorted pooling.
//!
//! Every operator reduces each valid `kh×kw` window of a `(batch, channel,
//! height, width)` input to one value. Windows are ranked in descending value
//! order with ties going to the lowest linear index, so forward and backward
//! are deterministic even on plateaus.
//!
//! * `KthMax(k)` outputs the k-th largest window value (1-indexed); `k = 1` is
//!   max pooling.
//! * `Sorted(K)` outputs `Σ_k W_k · v_(k)` over the K largest values `v_(k)`,
//!   where `W = softmax(w*)` and `w*` is one learnable row per channel shared
//!   by every window of that channel. `K = 1` reduces to max pooling, and
//!   `K = kh·kw` with `w* = 0` reduces to average pooling.

use crate::error::{Error, Result};
use crate::tensor::{IndexTensor, Tensor, WindowGeometry};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PoolMode {
    Max,
    Avg,
    /// k-th largest value, 1-indexed.
    KthMax(usize),
    /// Softmax-weighted sum of the K largest values.
    Sorted(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PoolConfig {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub mode: PoolMode,
}

impl PoolConfig {
    pub fn new(kernel: (usize, usize), stride: (usize, usize), mode: PoolMode) -> Result<Self> {
        if kernel.0 == 0 || kernel.1 == 0 || stride.0 == 0 || stride.1 == 0 {
            return Err(Error::Config(format!(
                "pooling kernel {kernel:?} and stride {stride:?} must be positive"
            )));
        }
        let n = kernel.0 * kernel.1;
        match mode {
            PoolMode::KthMax(k) if k == 0 || k > n => {
                return Err(Error::Config(format!("kth-max k = {k} must lie in 1..={n} for a {kernel:?} window")))
            }
            PoolMode::Sorted(k) if k == 0 || k > n => {
                return Err(Error::Config(format!("sorted K = {k} must lie in 1..={n} for a {kernel:?} window")))
            }
            _ => {}
        }
        Ok(PoolConfig { kernel, stride, mode })
    }

    pub fn window_len(&self) -> usize {
        self.kernel.0 * self.kernel.1
    }

    /// Output shape for a 4-D input, or an error if no window fits.
    pub fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        let geom = self.geometry(input_shape)?;
        Ok(vec![input_shape[0], input_shape[1], geom.out_height, geom.out_width])
    }

    fn geometry(&self, input_shape: &[usize]) -> Result<WindowGeometry> {
        if input_shape.len() != 4 {
            return Err(Error::InvalidShape {
                shape: input_shape.to_vec(),
                reason: "pooling expects (batch, channel, height, width)".into(),
            });
        }
        WindowGeometry::for_shape(input_shape, self.kernel, self.stride)
    }
}

/// Learnable raw weights `w*` for one sorted-pooling layer, one row per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct SortedPoolParams {
    pub raw_weights: Tensor,
    pub grad: Tensor,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightInit {
    /// `w* = 0`, so every `W_k = 1/K`.
    Uniform,
    /// `w*_k = -λ (k - 1)`: normalized weights decay geometrically by `e^-λ`.
    ExpDecay(f64),
}

pub fn init_weights(channels: usize, k: usize, scheme: WeightInit) -> Result<SortedPoolParams> {
    if channels == 0 || k == 0 {
        return Err(Error::Config(format!("sorted pooling needs channels >= 1 and K >= 1, got {channels} and {k}")));
    }
    let row: Vec<f64> = match scheme {
        WeightInit::Uniform => vec![0.0; k],
        WeightInit::ExpDecay(lambda) => {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::Config(format!("exp-decay lambda must be positive, got {lambda}")));
            }
            (0..k).map(|i| -lambda * i as f64).collect()
        }
    };
    let data = row.iter().copied().cycle().take(channels * k).collect();
    SortedPoolParams::new(Tensor::from_values(&[channels, k], data)?)
}

impl SortedPoolParams {
    pub fn new(raw_weights: Tensor) -> Result<Self> {
        if raw_weights.shape().len() != 2 {
            return Err(Error::InvalidShape {
                shape: raw_weights.shape().to_vec(),
                reason: "sorted pooling weights are (channels, K)".into(),
            });
        }
        if !raw_weights.is_finite() {
            return Err(Error::NonFinite("sorted pooling raw weights".into()));
        }
        let grad = raw_weights.zeros_like();
        Ok(SortedPoolParams { raw_weights, grad })
    }

    pub fn channels(&self) -> usize {
        self.raw_weights.shape()[0]
    }

    pub fn k(&self) -> usize {
        self.raw_weights.shape()[1]
    }

    /// Softmax of every channel row, shape `(channels, K)`.
    pub fn normalized(&self) -> Result<Tensor> {
        let k = self.k();
        let mut out = Vec::with_capacity(self.raw_weights.len());
        for row in self.raw_weights.data().chunks_exact(k) {
            out.extend(softmax_normalize(row)?);
        }
        Tensor::from_values(self.raw_weights.shape(), out)
    }

    /// Mean normalized weight vector over channels.
    pub fn mean_normalized(&self) -> Result<Vec<f64>> {
        let k = self.k();
        let w = self.normalized()?;
        let mut mean = vec![0.0; k];
        for row in w.data().chunks_exact(k) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        let c = self.channels() as f64;
        mean.iter_mut().for_each(|m| *m /= c);
        Ok(mean)
    }
}

/// Saved state for a pooling backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolSaved {
    /// `(batch, channels, outH, outW, slots)` input indices in descending value order.
    pub top_indices: IndexTensor,
    /// Values at `top_indices` (sorted pooling only).
    pub sorted_values: Option<Tensor>,
    /// `(channels, K)` softmax weights used in the forward pass (sorted pooling only).
    pub normalized_weights: Option<Tensor>,
}

impl PoolSaved {
    fn slots(&self) -> usize {
        *self.top_indices.shape().last().expect("5-D index tensor")
    }

    fn output_shape(&self) -> &[usize] {
        &self.top_indices.shape()[..4]
    }
}

/// Max-shifted softmax. Entries are strictly positive and sum to one.
pub fn softmax_normalize(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("softmax input {raw:?}")));
    }
    let m = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = raw.iter().map(|&v| (v - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Positions (within `values`) of the `k` largest entries, largest first.
/// Ties keep the earlier position first.
#[inline]
fn top_k_positions(values: &[f64], k: usize, out: &mut Vec<usize>) {
    out.clear();
    for (i, &v) in values.iter().enumerate() {
        // First slot whose value is strictly smaller; equal values stay ahead.
        let pos = out.iter().position(|&j| values[j] < v).unwrap_or(out.len());
        if pos < k {
            if out.len() == k {
                out.pop();
            }
            out.insert(pos, i);
        }
    }
}

/// Ranks every window and records the top `slots` linear input indices.
fn rank_windows(input: &Tensor, cfg: &PoolConfig, slots: usize) -> Result<(WindowGeometry, IndexTensor)> {
    let geom = cfg.geometry(input.shape())?;
    let data = input.data();
    let plane_len = geom.plane_len();
    let mut indices = Vec::with_capacity(geom.planes * geom.cells() * slots);
    let mut values = vec![0.0; geom.window_len()];
    let mut order = Vec::with_capacity(slots + 1);
    for plane in 0..geom.planes {
        let base = plane * plane_len;
        for cell in 0..geom.cells() {
            let window = geom.window(cell);
            for (v, &o) in values.iter_mut().zip(window) {
                *v = data[base + o];
            }
            top_k_positions(&values, slots, &mut order);
            indices.extend(order.iter().map(|&p| base + window[p]));
        }
    }
    let s = input.shape();
    let top = IndexTensor::new(&[s[0], s[1], geom.out_height, geom.out_width, slots], indices)?;
    Ok((geom, top))
}

fn out_shape(geom: &WindowGeometry, input_shape: &[usize]) -> [usize; 4] {
    [input_shape[0], input_shape[1], geom.out_height, geom.out_width]
}

pub fn kth_max_forward(input: &Tensor, cfg: &PoolConfig) -> Result<(Tensor, PoolSaved)> {
    let k = match cfg.mode {
        PoolMode::KthMax(k) => k,
        PoolMode::Max => 1,
        other => return Err(Error::Config(format!("kth_max_forward called with {other:?}"))),
    };
    let (geom, top) = rank_windows(input, cfg, k)?;
    let data = input.data();
    let out: Vec<usize> = top.data().chunks_exact(k).map(|w| w[k - 1]).collect();
    let values = out.iter().map(|&i| data[i]).collect();
    let output = Tensor::from_values(&out_shape(&geom, input.shape()), values)?;
    let top_indices = IndexTensor::new(&[output.shape(), &[1]].concat(), out)?;
    Ok((
        output,
        PoolSaved {
            top_indices,
            sorted_values: None,
            normalized_weights: None,
        },
    ))
}

fn check_grad_out(grad_out: &Tensor, saved: &PoolSaved, input_shape: &[usize]) -> Result<Tensor> {
    if grad_out.shape() != saved.output_shape() {
        return Err(Error::shape("pool backward", grad_out.shape(), saved.output_shape()));
    }
    saved.top_indices.check_bounds(input_shape)?;
    Tensor::zeros(input_shape)
}

/// Routes each window's upstream gradient to its selected input element.
pub fn kth_max_backward(grad_out: &Tensor, saved: &PoolSaved, input_shape: &[usize]) -> Result<Tensor> {
    let mut grad_in = check_grad_out(grad_out, saved, input_shape)?;
    let slots = saved.slots();
    let gi = grad_in.data_mut();
    for (idx, &g) in saved.top_indices.data().chunks_exact(slots).zip(grad_out.data()) {
        gi[idx[slots - 1]] += g;
    }
    Ok(grad_in)
}

pub fn max_pool(input: &Tensor, kernel: (usize, usize), stride: (usize, usize)) -> Result<(Tensor, PoolSaved)> {
    kth_max_forward(input, &PoolConfig::new(kernel, stride, PoolMode::Max)?)
}

pub fn max_pool_backward(grad_out: &Tensor, saved: &PoolSaved, input_shape: &[usize]) -> Result<Tensor> {
    kth_max_backward(grad_out, saved, input_shape)
}

pub fn avg_pool(input: &Tensor, kernel: (usize, usize), stride: (usize, usize)) -> Result<(Tensor, PoolSaved)> {
    let cfg = PoolConfig::new(kernel, stride, PoolMode::Avg)?;
    let n = cfg.window_len();
    let (geom, top) = rank_windows(input, &cfg, n)?;
    let data = input.data();
    let values = top
        .data()
        .chunks_exact(n)
        .map(|w| w.iter().map(|&i| data[i]).sum::<f64>() / n as f64)
        .collect();
    let output = Tensor::from_values(&out_shape(&geom, input.shape()), values)?;
    Ok((
        output,
        PoolSaved {
            top_indices: top,
            sorted_values: None,
            normalized_weights: None,
        },
    ))
}

/// Spreads each window's upstream gradient uniformly over its `N` elements.
pub fn avg_pool_backward(grad_out: &Tensor, saved: &PoolSaved, input_shape: &[usize]) -> Result<Tensor> {
    let mut grad_in = check_grad_out(grad_out, saved, input_shape)?;
    let n = saved.slots();
    let gi = grad_in.data_mut();
    for (idx, &g) in saved.top_indices.data().chunks_exact(n).zip(grad_out.data()) {
        let share = g / n as f64;
        for &i in idx {
            gi[i] += share;
        }
    }
    Ok(grad_in)
}

pub fn sorted_pool_forward(input: &Tensor, params: &SortedPoolParams, cfg: &PoolConfig) -> Result<(Tensor, PoolSaved)> {
    let PoolMode::Sorted(k) = cfg.mode else {
        return Err(Error::Config(format!("sorted_pool_forward called with {:?}", cfg.mode)));
    };
    let shape = input.shape();
    if shape.len() != 4 || params.channels() != shape[1] || params.k() != k {
        return Err(Error::shape(
            "sorted_pool_forward (input vs weights)",
            shape,
            params.raw_weights.shape(),
        ));
    }
    let channels = shape[1];
    let weights = params.normalized()?;
    let (geom, top) = rank_windows(input, cfg, k)?;
    let data = input.data();
    let cells = geom.cells();

    let mut sorted = Vec::with_capacity(top.data().len());
    let mut out = Vec::with_capacity(top.data().len() / k);
    for (w, idx) in top.data().chunks_exact(k).enumerate() {
        let c = (w / cells) % channels;
        let row = &weights.data()[c * k..(c + 1) * k];
        let mut acc = 0.0;
        for (&i, &wk) in idx.iter().zip(row) {
            let v = data[i];
            sorted.push(v);
            acc += wk * v;
        }
        out.push(acc);
    }
    let output = Tensor::from_values(&out_shape(&geom, shape), out)?;
    let sorted_values = Tensor::from_values(top.shape(), sorted)?;
    Ok((
        output,
        PoolSaved {
            top_indices: top,
            sorted_values: Some(sorted_values),
            normalized_weights: Some(weights),
        },
    ))
}

/// Backward through the weighted sum and the softmax.
///
/// `grad_in[idx_k] += W_k g` per window, and for channel `c`
/// `grad[c, k] += g · W_k · (v_k - Σ_j W_j v_j)`, which is the softmax
/// Jacobian `W_j (δ_jk - W_k)` contracted with the sorted values.
pub fn sorted_pool_backward(
    grad_out: &Tensor,
    saved: &PoolSaved,
    params: &mut SortedPoolParams,
    input_shape: &[usize],
) -> Result<Tensor> {
    let mut grad_in = check_grad_out(grad_out, saved, input_shape)?;
    let (Some(values), Some(weights)) = (&saved.sorted_values, &saved.normalized_weights) else {
        return Err(Error::Config("sorted_pool_backward needs state saved by sorted_pool_forward".into()));
    };
    let k = saved.slots();
    let channels = input_shape[1];
    if weights.shape() != [channels, k] || params.raw_weights.shape() != weights.shape() {
        return Err(Error::shape(
            "sorted_pool_backward (weights)",
            weights.shape(),
            params.raw_weights.shape(),
        ));
    }
    let cells = saved.output_shape()[2] * saved.output_shape()[3];
    let gi = grad_in.data_mut();
    let pg = params.grad.data_mut();
    let windows = saved.top_indices.data().chunks_exact(k).zip(values.data().chunks_exact(k));
    for (w, ((idx, vals), &g)) in windows.zip(grad_out.data()).enumerate() {
        let c = (w / cells) % channels;
        let row = &weights.data()[c * k..(c + 1) * k];
        let pooled: f64 = row.iter().zip(vals).map(|(a, b)| a * b).sum();
        for j in 0..k {
            gi[idx[j]] += row[j] * g;
            pg[c * k + j] += g * row[j] * (vals[j] - pooled);
        }
    }
    Ok(grad_in)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(values: &[f64]) -> Tensor {
        Tensor::from_values(&[1, 1, 1, values.len()], values.to_vec()).unwrap()
    }

    fn cfg(n: usize, mode: PoolMode) -> PoolConfig {
        PoolConfig::new((1, n), (1, 1), mode).unwrap()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_normalize(&[0.0; 4]).unwrap(), vec![0.25; 4]);
        let w = softmax_normalize(&[2f64.ln(), 0.0]).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15 && (w[1] - 1.0 / 3.0).abs() < 1e-15);
        let big = softmax_normalize(&[1000.0, 999.0]).unwrap();
        let small = softmax_normalize(&[1.0, 0.0]).unwrap();
        assert!(big.iter().all(|v| v.is_finite()));
        for (a, b) in big.iter().zip(&small) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(softmax_normalize(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PoolConfig::new((3, 3), (2, 2), PoolMode::KthMax(9)).is_ok());
        assert!(PoolConfig::new((3, 3), (2, 2), PoolMode::KthMax(10)).is_err());
        assert!(PoolConfig::new((3, 3), (2, 2), PoolMode::KthMax(0)).is_err());
        assert!(PoolConfig::new((2, 2), (2, 2), PoolMode::Sorted(5)).is_err());
        assert!(PoolConfig::new((0, 2), (2, 2), PoolMode::Max).is_err());
    }

    #[test]
    fn kth_max_examples() {
        let (out, _) = kth_max_forward(&window(&[3.0, 1.0, 4.0, 2.0]), &cfg(4, PoolMode::KthMax(2))).unwrap();
        assert_eq!(out.data(), &[3.0]);

        let (out, saved) = kth_max_forward(&window(&[5.0, 5.0, 1.0]), &cfg(3, PoolMode::KthMax(1))).unwrap();
        assert_eq!(out.data(), &[5.0]);
        assert_eq!(saved.top_indices.data(), &[0]);

        let (_, saved) = kth_max_forward(&window(&[5.0, 5.0, 1.0]), &cfg(3, PoolMode::KthMax(2))).unwrap();
        assert_eq!(saved.top_indices.data(), &[1]);
    }

    #[test]
    fn kth_max_backward_routes_to_selected_index() {
        let input = window(&[3.0, 1.0, 4.0, 2.0]);
        let (out, saved) = kth_max_forward(&input, &cfg(4, PoolMode::KthMax(2))).unwrap();
        let g = Tensor::full(out.shape(), 1.0).unwrap();
        let gi = kth_max_backward(&g, &saved, input.shape()).unwrap();
        assert_eq!(gi.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn overlapping_windows_accumulate() {
        // Windows [0..3) and [1..4) both pick the 9 at index 2.
        let input = window(&[1.0, 2.0, 9.0, 0.0]);
        let c = PoolConfig::new((1, 3), (1, 1), PoolMode::Max).unwrap();
        let (out, saved) = kth_max_forward(&input, &c).unwrap();
        assert_eq!(out.data(), &[9.0, 9.0]);
        let g = Tensor::from_values(out.shape(), vec![1.0, 2.0]).unwrap();
        let gi = kth_max_backward(&g, &saved, input.shape()).unwrap();
        assert_eq!(gi.data(), &[0.0, 0.0, 3.0, 0.0]);
    }

    #[test]
    fn backward_shape_mismatch() {
        let input = window(&[3.0, 1.0, 4.0, 2.0]);
        let (_, saved) = kth_max_forward(&input, &cfg(4, PoolMode::KthMax(2))).unwrap();
        let bad = Tensor::zeros(&[1, 1, 1, 2]).unwrap();
        assert!(kth_max_backward(&bad, &saved, input.shape()).is_err());
    }

    #[test]
    fn max_and_avg_examples() {
        let input = Tensor::from_values(&[1, 1, 2, 2], vec![5.0, 2.0, 0.0, -1.0]).unwrap();
        let (m, _) = max_pool(&input, (2, 2), (2, 2)).unwrap();
        let (a, saved) = avg_pool(&input, (2, 2), (2, 2)).unwrap();
        assert_eq!(m.data(), &[5.0]);
        assert_eq!(a.data(), &[1.5]);

        let g = Tensor::full(&[1, 1, 1, 1], 4.0).unwrap();
        let gi = avg_pool_backward(&g, &saved, input.shape()).unwrap();
        assert_eq!(gi.data(), &[1.0; 4]);
    }

    #[test]
    fn sorted_examples() {
        let input = window(&[4.0, 3.0, 2.0, 1.0]);
        let params = init_weights(1, 4, WeightInit::Uniform).unwrap();
        let (out, _) = sorted_pool_forward(&input, &params, &cfg(4, PoolMode::Sorted(4))).unwrap();
        assert!((out.data()[0] - 2.5).abs() < 1e-15);

        let params = SortedPoolParams::new(Tensor::from_values(&[1, 2], vec![2f64.ln(), 0.0]).unwrap()).unwrap();
        let (out, saved) = sorted_pool_forward(&input, &params, &cfg(4, PoolMode::Sorted(2))).unwrap();
        assert!((out.data()[0] - 11.0 / 3.0).abs() < 1e-14);
        assert_eq!(saved.top_indices.data(), &[0, 1]);
        assert_eq!(saved.sorted_values.unwrap().data(), &[4.0, 3.0]);
    }

    #[test]
    fn sorted_k1_is_max() {
        let input = window(&[0.3, -2.0, 7.5, 7.5, 1.0]);
        let params = init_weights(1, 1, WeightInit::Uniform).unwrap();
        let (s, _) = sorted_pool_forward(&input, &params, &cfg(5, PoolMode::Sorted(1))).unwrap();
        let (m, _) = kth_max_forward(&input, &cfg(5, PoolMode::Max)).unwrap();
        assert_eq!(s.data(), m.data());
    }

    #[test]
    fn sorted_channel_mismatch() {
        let input = Tensor::zeros(&[1, 2, 3, 3]).unwrap();
        let params = init_weights(3, 2, WeightInit::Uniform).unwrap();
        let c = PoolConfig::new((3, 3), (1, 1), PoolMode::Sorted(2)).unwrap();
        assert!(sorted_pool_forward(&input, &params, &c).is_err());
    }

    #[test]
    fn uniform_k2_weight_gradient_is_softmax_jacobian() {
        // W = [0.5, 0.5]; Jacobian [[.25, -.25], [-.25, .25]] applied to v = [4, 3].
        let input = window(&[4.0, 3.0]);
        let mut params = init_weights(1, 2, WeightInit::Uniform).unwrap();
        let c = cfg(2, PoolMode::Sorted(2));
        let (out, saved) = sorted_pool_forward(&input, &params, &c).unwrap();
        let g = Tensor::full(out.shape(), 1.0).unwrap();
        let gi = sorted_pool_backward(&g, &saved, &mut params, input.shape()).unwrap();
        assert_eq!(gi.data(), &[0.5, 0.5]);
        let want = [0.25 * 4.0 - 0.25 * 3.0, -0.25 * 4.0 + 0.25 * 3.0];
        for (g, w) in params.grad.data().iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
    }

    #[test]
    fn k1_weight_gradient_vanishes() {
        let input = Tensor::from_values(&[1, 1, 3, 3], (0..9).map(|i| (i * 7 % 5) as f64).collect()).unwrap();
        let mut params = init_weights(1, 1, WeightInit::Uniform).unwrap();
        let c = PoolConfig::new((2, 2), (1, 1), PoolMode::Sorted(1)).unwrap();
        let (out, saved) = sorted_pool_forward(&input, &params, &c).unwrap();
        let g = Tensor::full(out.shape(), 3.0).unwrap();
        sorted_pool_backward(&g, &saved, &mut params, input.shape()).unwrap();
        assert_eq!(params.grad.data(), &[0.0]);
    }

    #[test]
    fn init_schemes() {
        let p = init_weights(2, 4, WeightInit::Uniform).unwrap();
        assert_eq!(p.normalized().unwrap().data(), &[0.25; 8]);

        let w = init_weights(1, 2, WeightInit::ExpDecay(2f64.ln())).unwrap().normalized().unwrap();
        assert!((w.data()[0] - 2.0 / 3.0).abs() < 1e-15 && (w.data()[1] - 1.0 / 3.0).abs() < 1e-15);

        let w = init_weights(1, 3, WeightInit::ExpDecay(1.0)).unwrap().normalized().unwrap();
        let e = std::f64::consts::E;
        assert!((w.data()[0] / w.data()[1] - e).abs() < 1e-12);
        assert!((w.data()[1] / w.data()[2] - e).abs() < 1e-12);

        assert!(init_weights(0, 2, WeightInit::Uniform).is_err());
        assert!(init_weights(2, 2, WeightInit::ExpDecay(0.0)).is_err());
        assert!(init_weights(2, 2, WeightInit::ExpDecay(-1.0)).is_err());
    }

    #[test]
    fn non_finite_weights_rejected() {
        let t = Tensor::from_values(&[1, 2], vec![0.0, f64::INFINITY]).unwrap();
        assert!(SortedPoolParams::new(t).is_err());
    }

    #[test]
    fn top_k_positions_is_stable() {
        let mut out = Vec::new();
        top_k_positions(&[1.0, 3.0, 3.0, 2.0, 3.0], 4, &mut out);
        assert_eq!(out, vec![1, 2, 4, 3]);
        top_k_positions(&[1.0, 3.0, 3.0, 2.0, 3.0], 1, &mut out);
        assert_eq!(out, vec![1]);
    }
}
