//! Differentiable layers and the sequential [`LayerGraph`].

mod activation;
mod conv;
mod dense;
mod loss;

pub use activation::{flatten_backward, flatten_forward, relu_backward, relu_forward, Flatten, Relu};
pub use conv::{conv2d_backward, conv2d_forward, Conv2d, ConvSaved};
pub use dense::{dense_backward, dense_forward, Dense};
pub use loss::softmax_cross_entropy;

use crate::error::{Error, Result};
use crate::pooling::{
    avg_pool, avg_pool_backward, init_weights, kth_max_backward, kth_max_forward, sorted_pool_backward,
    sorted_pool_forward, PoolConfig, PoolMode, PoolSaved, SortedPoolParams, WeightInit,
};
use crate::tensor::Tensor;

/// A pooling layer; sorted mode owns one `(channels, K)` weight block.
#[derive(Clone, Debug)]
pub struct Pool {
    pub cfg: PoolConfig,
    pub params: Option<SortedPoolParams>,
    saved: Option<(Vec<usize>, PoolSaved)>,
}

impl Pool {
    pub fn new(cfg: PoolConfig, channels: usize, init: WeightInit) -> Result<Self> {
        let params = match cfg.mode {
            PoolMode::Sorted(k) => Some(init_weights(channels, k, init)?),
            _ => None,
        };
        Ok(Pool { cfg, params, saved: None })
    }

    fn run(&self, input: &Tensor) -> Result<(Tensor, PoolSaved)> {
        match (self.cfg.mode, &self.params) {
            (PoolMode::Max | PoolMode::KthMax(_), _) => kth_max_forward(input, &self.cfg),
            (PoolMode::Avg, _) => avg_pool(input, self.cfg.kernel, self.cfg.stride),
            (PoolMode::Sorted(_), Some(p)) => sorted_pool_forward(input, p, &self.cfg),
            (PoolMode::Sorted(_), None) => Err(Error::Config("sorted pool layer without weights".into())),
        }
    }

    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.run(input)?.0)
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let (out, saved) = self.run(input)?;
        self.saved = Some((input.shape().to_vec(), saved));
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let (shape, saved) = self.saved.as_ref().ok_or(Error::NoForwardCache("pool"))?;
        match self.cfg.mode {
            PoolMode::Max | PoolMode::KthMax(_) => kth_max_backward(grad_out, saved, shape),
            PoolMode::Avg => avg_pool_backward(grad_out, saved, shape),
            PoolMode::Sorted(_) => {
                let params = self.params.as_mut().expect("sorted pool layer owns weights");
                sorted_pool_backward(grad_out, saved, params, shape)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum Layer {
    Conv2d(Conv2d),
    Relu(Relu),
    Pool(Pool),
    Flatten(Flatten),
    Dense(Dense),
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::Relu(_) => "relu",
            Layer::Pool(_) => "pool",
            Layer::Flatten(_) => "flatten",
            Layer::Dense(_) => "dense",
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Conv2d(c) => c.output_shape(input),
            Layer::Relu(_) => Ok(input.to_vec()),
            Layer::Pool(p) => {
                if let Some(params) = &p.params {
                    if input.get(1) != Some(&params.channels()) {
                        return Err(Error::shape("sorted pool (input vs weights)", input, params.raw_weights.shape()));
                    }
                }
                p.cfg.output_shape(input)
            }
            Layer::Flatten(_) => {
                if input.len() < 2 {
                    return Err(Error::shape("flatten", input, &[]));
                }
                Ok(vec![input[0], input[1..].iter().product()])
            }
            Layer::Dense(d) => d.output_shape(input),
        }
    }

    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv2d(c) => c.infer(input),
            Layer::Relu(_) => Ok(relu_forward(input)),
            Layer::Pool(p) => p.infer(input),
            Layer::Flatten(_) => flatten_forward(input),
            Layer::Dense(d) => d.infer(input),
        }
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv2d(c) => c.forward(input),
            Layer::Relu(r) => Ok(r.forward(input)),
            Layer::Pool(p) => p.forward(input),
            Layer::Flatten(f) => f.forward(input),
            Layer::Dense(d) => d.forward(input),
        }
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv2d(c) => c.backward(grad_out),
            Layer::Relu(r) => r.backward(grad_out),
            Layer::Pool(p) => p.backward(grad_out),
            Layer::Flatten(f) => f.backward(grad_out),
            Layer::Dense(d) => d.backward(grad_out),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    PoolWeight,
}

/// A parameter tensor paired with its gradient accumulator.
#[derive(Debug)]
pub struct Param<'a> {
    pub name: String,
    pub kind: ParamKind,
    pub value: &'a mut Tensor,
    pub grad: &'a mut Tensor,
}

#[derive(Clone, Debug, Default)]
pub struct LayerGraph {
    pub layers: Vec<Layer>,
    forwarded: bool,
}

impl LayerGraph {
    pub fn new(layers: Vec<Layer>) -> Self {
        LayerGraph { layers, forwarded: false }
    }

    /// Symbolic shape pass; fails on the first incompatible layer.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.layers.iter().try_fold(input.to_vec(), |s, l| l.output_shape(&s))
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let mut x = input.clone();
        for layer in &mut self.layers {
            x = layer.forward(&x)?;
        }
        self.forwarded = true;
        Ok(x)
    }

    /// Forward without caching anything for backward.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        self.infer_prefix(input, self.layers.len())
    }

    /// Output of the first `n` layers.
    pub fn infer_prefix(&self, input: &Tensor, n: usize) -> Result<Tensor> {
        let mut x = input.clone();
        for layer in &self.layers[..n.min(self.layers.len())] {
            x = layer.infer(&x)?;
        }
        Ok(x)
    }

    /// Index of the first layer whose output contains a NaN or infinity.
    pub fn first_non_finite(&self, input: &Tensor) -> Result<Option<usize>> {
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.infer(&x)?;
            if !x.is_finite() {
                return Ok(Some(i));
            }
        }
        Ok(None)
    }

    /// Accumulates every parameter gradient and returns the input gradient.
    pub fn backward(&mut self, grad_logits: &Tensor) -> Result<Tensor> {
        if !self.forwarded {
            return Err(Error::NoForwardCache("graph"));
        }
        let mut g = grad_logits.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        self.forwarded = false;
        Ok(g)
    }

    /// Every learnable tensor with its gradient, sorted-pool weights included.
    pub fn params_mut(&mut self) -> Vec<Param<'_>> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::Conv2d(c) => {
                    out.push(Param {
                        name: format!("layer{i}.conv.weight"),
                        kind: ParamKind::Weight,
                        value: &mut c.weight,
                        grad: &mut c.grad_weight,
                    });
                    out.push(Param {
                        name: format!("layer{i}.conv.bias"),
                        kind: ParamKind::Bias,
                        value: &mut c.bias,
                        grad: &mut c.grad_bias,
                    });
                }
                Layer::Dense(d) => {
                    out.push(Param {
                        name: format!("layer{i}.dense.weight"),
                        kind: ParamKind::Weight,
                        value: &mut d.weight,
                        grad: &mut d.grad_weight,
                    });
                    out.push(Param {
                        name: format!("layer{i}.dense.bias"),
                        kind: ParamKind::Bias,
                        value: &mut d.bias,
                        grad: &mut d.grad_bias,
                    });
                }
                Layer::Pool(Pool { params: Some(p), .. }) => out.push(Param {
                    name: format!("layer{i}.pool.raw_weights"),
                    kind: ParamKind::PoolWeight,
                    value: &mut p.raw_weights,
                    grad: &mut p.grad,
                }),
                _ => {}
            }
        }
        out
    }

    /// Read-only view of the parameter tensors in `params_mut` order.
    pub fn param_values(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv2d(c) => {
                    out.push((format!("layer{i}.conv.weight"), &c.weight));
                    out.push((format!("layer{i}.conv.bias"), &c.bias));
                }
                Layer::Dense(d) => {
                    out.push((format!("layer{i}.dense.weight"), &d.weight));
                    out.push((format!("layer{i}.dense.bias"), &d.bias));
                }
                Layer::Pool(Pool { params: Some(p), .. }) => {
                    out.push((format!("layer{i}.pool.raw_weights"), &p.raw_weights))
                }
                _ => {}
            }
        }
        out
    }

    /// Sorted-pooling parameter blocks in layer order.
    pub fn sorted_pools(&self) -> Vec<&SortedPoolParams> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Pool(Pool { params: Some(p), .. }) => Some(p),
                _ => None,
            })
            .collect()
    }
}
