//! Valid 2-D cross-correlation via im2col.
//!
//! The whole batch is unfolded into one `(inC·kh·kw) × (B·outH·outW)` matrix so
//! a single GEMM per pass covers every image; late layers have only a few
//! output cells per image and per-image products would be tiny.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::{gemm, Tensor, WindowGeometry};

/// Forward cache: the unfolded batch, `(inC·kh·kw) × (B·outH·outW)`.
#[derive(Clone, Debug)]
pub struct ConvSaved {
    input_shape: Vec<usize>,
    geom: WindowGeometry,
    cols: Vec<f64>,
}

/// Unfolds image `b` into columns `b·cells ..` of a row-major matrix with `stride_cols` columns.
fn im2col(input: &[f64], channels: usize, geom: &WindowGeometry, cols: &mut [f64], stride_cols: usize, col0: usize) {
    let cells = geom.cells();
    let wl = geom.window_len();
    let plane = geom.plane_len();
    for c in 0..channels {
        let src = &input[c * plane..(c + 1) * plane];
        for cell in 0..cells {
            for (q, &o) in geom.window(cell).iter().enumerate() {
                cols[(c * wl + q) * stride_cols + col0 + cell] = src[o];
            }
        }
    }
}

fn col2im(cols: &[f64], channels: usize, geom: &WindowGeometry, out: &mut [f64], stride_cols: usize, col0: usize) {
    let cells = geom.cells();
    let wl = geom.window_len();
    let plane = geom.plane_len();
    for c in 0..channels {
        let dst = &mut out[c * plane..(c + 1) * plane];
        for cell in 0..cells {
            for (q, &o) in geom.window(cell).iter().enumerate() {
                dst[o] += cols[(c * wl + q) * stride_cols + col0 + cell];
            }
        }
    }
}

/// Four independent partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn check_shapes(input: &[usize], weight: &[usize], bias: &[usize]) -> Result<()> {
    if input.len() != 4 || weight.len() != 4 || input[1] != weight[1] {
        return Err(Error::shape("conv2d (input vs weight)", input, weight));
    }
    if bias != [weight[0]] {
        return Err(Error::shape("conv2d (weight vs bias)", weight, bias));
    }
    Ok(())
}

pub fn conv2d_forward(input: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize) -> Result<(Tensor, ConvSaved)> {
    check_shapes(input.shape(), weight.shape(), bias.shape())?;
    let (batch, in_c) = (input.shape()[0], input.shape()[1]);
    let ws = weight.shape();
    let (out_c, kh, kw) = (ws[0], ws[2], ws[3]);
    let geom = WindowGeometry::for_shape(&input.shape()[2..], (kh, kw), (stride, stride))?;
    let cells = geom.cells();
    let rows = in_c * kh * kw;
    let in_len = in_c * geom.plane_len();
    let total = batch * cells;

    let mut cols = vec![0.0; rows * total];
    for b in 0..batch {
        im2col(&input.data()[b * in_len..(b + 1) * in_len], in_c, &geom, &mut cols, total, b * cells);
    }
    // (outC × B·cells), then reordered to (B, outC, cells).
    let mut prod = vec![0.0; out_c * total];
    for (row, &bv) in prod.chunks_exact_mut(total).zip(bias.data()) {
        row.fill(bv);
    }
    gemm(out_c, rows, total, weight.data(), &cols, &mut prod);
    let mut out = vec![0.0; batch * out_c * cells];
    for (o, row) in prod.chunks_exact(total).enumerate() {
        for (b, chunk) in row.chunks_exact(cells).enumerate() {
            out[(b * out_c + o) * cells..(b * out_c + o + 1) * cells].copy_from_slice(chunk);
        }
    }
    let output = Tensor::from_values(&[batch, out_c, geom.out_height, geom.out_width], out)?;
    Ok((
        output,
        ConvSaved {
            input_shape: input.shape().to_vec(),
            geom,
            cols,
        },
    ))
}

/// Returns `(grad_in, grad_weight, grad_bias)`.
pub fn conv2d_backward(grad_out: &Tensor, saved: &ConvSaved, weight: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let in_shape = &saved.input_shape;
    let (batch, in_c) = (in_shape[0], in_shape[1]);
    let out_c = weight.shape()[0];
    let geom = &saved.geom;
    let cells = geom.cells();
    let expected = [batch, out_c, geom.out_height, geom.out_width];
    if grad_out.shape() != expected {
        return Err(Error::shape("conv2d backward", grad_out.shape(), &expected));
    }
    let rows = in_c * geom.window_len();
    let in_len = in_c * geom.plane_len();
    let total = batch * cells;

    // grad_out reordered to (outC × B·cells).
    let mut go = vec![0.0; out_c * total];
    for (i, chunk) in grad_out.data().chunks_exact(cells).enumerate() {
        let (b, o) = (i / out_c, i % out_c);
        go[o * total + b * cells..o * total + (b + 1) * cells].copy_from_slice(chunk);
    }

    let mut grad_b = Tensor::zeros(&[out_c])?;
    for (gb, row) in grad_b.data_mut().iter_mut().zip(go.chunks_exact(total)) {
        *gb = row.iter().sum();
    }
    // grad_w (outC × rows) = go · colsᵀ
    let mut grad_w = weight.zeros_like();
    for (gw_row, go_row) in grad_w.data_mut().chunks_exact_mut(rows).zip(go.chunks_exact(total)) {
        for (g, col_row) in gw_row.iter_mut().zip(saved.cols.chunks_exact(total)) {
            *g = dot(go_row, col_row);
        }
    }
    // gcols (rows × B·cells) = Wᵀ · go
    let mut gcols = vec![0.0; rows * total];
    for (w_row, go_row) in weight.data().chunks_exact(rows).zip(go.chunks_exact(total)) {
        for (q, &w) in w_row.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (g, &d) in gcols[q * total..(q + 1) * total].iter_mut().zip(go_row) {
                *g += w * d;
            }
        }
    }
    let mut grad_in = Tensor::zeros(in_shape)?;
    for b in 0..batch {
        col2im(&gcols, in_c, geom, &mut grad_in.data_mut()[b * in_len..(b + 1) * in_len], total, b * cells);
    }
    Ok((grad_in, grad_w, grad_b))
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub grad_weight: Tensor,
    pub grad_bias: Tensor,
    pub stride: usize,
    saved: Option<ConvSaved>,
}

impl Conv2d {
    /// Weights uniform in `±1/sqrt(inC·kh·kw)`, zero bias.
    pub fn new(in_channels: usize, out_channels: usize, kernel: (usize, usize), stride: usize, rng: &mut SplitMix64) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Config("conv stride must be positive".into()));
        }
        let shape = [out_channels, in_channels, kernel.0, kernel.1];
        let fan_in = (in_channels * kernel.0 * kernel.1) as f64;
        let bound = 1.0 / fan_in.sqrt();
        let n: usize = shape.iter().product();
        let weight = Tensor::from_values(&shape, (0..n).map(|_| rng.uniform(-bound, bound)).collect())?;
        Self::from_parts(weight, Tensor::zeros(&[out_channels])?, stride)
    }

    pub fn from_parts(weight: Tensor, bias: Tensor, stride: usize) -> Result<Self> {
        if weight.shape().len() != 4 || bias.shape() != [weight.shape()[0]] {
            return Err(Error::shape("Conv2d::from_parts", weight.shape(), bias.shape()));
        }
        Ok(Conv2d {
            grad_weight: weight.zeros_like(),
            grad_bias: bias.zeros_like(),
            weight,
            bias,
            stride,
            saved: None,
        })
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let ws = self.weight.shape();
        if input.len() != 4 || input[1] != ws[1] {
            return Err(Error::shape("conv2d (input vs weight)", input, ws));
        }
        let g = WindowGeometry::new(input[2], input[3], (ws[2], ws[3]), (self.stride, self.stride))?;
        Ok(vec![input[0], ws[0], g.out_height, g.out_width])
    }

    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        Ok(conv2d_forward(input, &self.weight, &self.bias, self.stride)?.0)
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let (out, saved) = conv2d_forward(input, &self.weight, &self.bias, self.stride)?;
        self.saved = Some(saved);
        Ok(out)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let saved = self.saved.as_ref().ok_or(Error::NoForwardCache("conv2d"))?;
        let (gi, gw, gb) = conv2d_backward(grad_out, saved, &self.weight)?;
        self.grad_weight.add_assign(&gw)?;
        self.grad_bias.add_assign(&gb)?;
        Ok(gi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_kernel_is_identity() {
        let input = Tensor::from_values(&[1, 1, 2, 3], vec![1.0, -2.0, 3.0, 4.0, 5.5, 6.0]).unwrap();
        let w = Tensor::full(&[1, 1, 1, 1], 1.0).unwrap();
        let b = Tensor::zeros(&[1]).unwrap();
        let (out, _) = conv2d_forward(&input, &w, &b, 1).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn ones_kernel_sums() {
        let input = Tensor::full(&[1, 1, 3, 3], 1.0).unwrap();
        let w = Tensor::full(&[1, 1, 3, 3], 1.0).unwrap();
        let b = Tensor::zeros(&[1]).unwrap();
        let (out, _) = conv2d_forward(&input, &w, &b, 1).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1, 1]);
        assert_eq!(out.data(), &[9.0]);
    }

    #[test]
    fn matches_direct_loops() {
        let mut rng = SplitMix64::new(4);
        let (b, ci, co, h, w, k, s) = (2, 3, 4, 7, 6, 3, 2);
        let input = Tensor::from_values(&[b, ci, h, w], (0..b * ci * h * w).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
        let conv = Conv2d::new(ci, co, (k, k), s, &mut rng).unwrap();
        let bias = Tensor::from_values(&[co], (0..co).map(|i| i as f64 * 0.1).collect()).unwrap();
        let out = conv2d_forward(&input, &conv.weight, &bias, s).unwrap().0;
        let (oh, ow) = ((h - k) / s + 1, (w - k) / s + 1);
        assert_eq!(out.shape(), &[b, co, oh, ow]);
        for n in 0..b {
            for o in 0..co {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut acc = bias.data()[o];
                        for c in 0..ci {
                            for dy in 0..k {
                                for dx in 0..k {
                                    acc += conv.weight.get(&[o, c, dy, dx]).unwrap()
                                        * input.get(&[n, c, y * s + dy, x * s + dx]).unwrap();
                                }
                            }
                        }
                        let got = out.get(&[n, o, y, x]).unwrap();
                        assert!((got - acc).abs() < 1e-12, "{got} vs {acc}");
                    }
                }
            }
        }
    }

    #[test]
    fn channel_mismatch() {
        let input = Tensor::zeros(&[1, 2, 5, 5]).unwrap();
        let w = Tensor::zeros(&[3, 1, 3, 3]).unwrap();
        let b = Tensor::zeros(&[3]).unwrap();
        assert!(conv2d_forward(&input, &w, &b, 1).is_err());
    }

    #[test]
    fn backward_before_forward() {
        let mut rng = SplitMix64::new(1);
        let mut conv = Conv2d::new(1, 1, (3, 3), 1, &mut rng).unwrap();
        let g = Tensor::zeros(&[1, 1, 1, 1]).unwrap();
        assert!(matches!(conv.backward(&g), Err(Error::NoForwardCache(_))));
    }
}
