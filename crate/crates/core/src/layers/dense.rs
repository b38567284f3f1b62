use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// `y = x Wᵀ + b` per batch row, `W` is `(out, in)`.
pub fn dense_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (is, ws) = (input.shape(), weight.shape());
    if is.len() != 2 || ws.len() != 2 || is[1] != ws[1] {
        return Err(Error::shape("dense (input vs weight)", is, ws));
    }
    if bias.shape() != [ws[0]] {
        return Err(Error::shape("dense (weight vs bias)", ws, bias.shape()));
    }
    let (batch, fan_in, fan_out) = (is[0], is[1], ws[0]);
    let mut out = Vec::with_capacity(batch * fan_out);
    for x in input.data().chunks_exact(fan_in) {
        for (w, &b) in weight.data().chunks_exact(fan_in).zip(bias.data()) {
            out.push(b + w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>());
        }
    }
    Tensor::from_values(&[batch, fan_out], out)
}

/// Returns `(grad_in, grad_weight, grad_bias)`.
pub fn dense_backward(grad_out: &Tensor, input: &Tensor, weight: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (batch, fan_in) = (input.shape()[0], input.shape()[1]);
    let fan_out = weight.shape()[0];
    if grad_out.shape() != [batch, fan_out] {
        return Err(Error::shape("dense backward", grad_out.shape(), &[batch, fan_out]));
    }
    let mut gi = input.zeros_like();
    let mut gw = weight.zeros_like();
    let mut gb = Tensor::zeros(&[fan_out])?;
    for ((go, x), gx) in grad_out
        .data()
        .chunks_exact(fan_out)
        .zip(input.data().chunks_exact(fan_in))
        .zip(gi.data_mut().chunks_exact_mut(fan_in))
    {
        for (o, &g) in go.iter().enumerate() {
            gb.data_mut()[o] += g;
            let w = &weight.data()[o * fan_in..(o + 1) * fan_in];
            let gw_row = &mut gw.data_mut()[o * fan_in..(o + 1) * fan_in];
            for i in 0..fan_in {
                gw_row[i] += g * x[i];
                gx[i] += g * w[i];
            }
        }
    }
    Ok((gi, gw, gb))
}

#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
    pub grad_weight: Tensor,
    pub grad_bias: Tensor,
    input: Option<Tensor>,
}

impl Dense {
    /// Weights uniform in `±1/sqrt(fan_in)`, zero bias.
    pub fn new(fan_in: usize, fan_out: usize, rng: &mut SplitMix64) -> Result<Self> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = Tensor::from_values(
            &[fan_out, fan_in],
            (0..fan_in * fan_out).map(|_| rng.uniform(-bound, bound)).collect(),
        )?;
        Self::from_parts(weight, Tensor::zeros(&[fan_out])?)
    }

    pub fn from_parts(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.shape().len() != 2 || bias.shape() != [weight.shape()[0]] {
            return Err(Error::shape("Dense::from_parts", weight.shape(), bias.shape()));
        }
        Ok(Dense {
            grad_weight: weight.zeros_like(),
            grad_bias: bias.zeros_like(),
            weight,
            bias,
            input: None,
        })
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 2 || input[1] != self.weight.shape()[1] {
            return Err(Error::shape("dense (input vs weight)", input, self.weight.shape()));
        }
        Ok(vec![input[0], self.weight.shape()[0]])
    }

    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        dense_forward(input, &self.weight, &self.bias)
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let out = dense_forward(input, &self.weight, &self.bias)?;
        self.input = Some(input.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let input = self.input.as_ref().ok_or(Error::NoForwardCache("dense"))?;
        let (gi, gw, gb) = dense_backward(grad_out, input, &self.weight)?;
        self.grad_weight.add_assign(&gw)?;
        self.grad_bias.add_assign(&gb)?;
        Ok(gi)
    }
}
