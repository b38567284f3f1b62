use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn relu_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Passes the gradient where the forward input was strictly positive.
pub fn relu_backward(grad_out: &Tensor, input: &Tensor) -> Result<Tensor> {
    if grad_out.shape() != input.shape() {
        return Err(Error::shape("relu backward", grad_out.shape(), input.shape()));
    }
    let mut gi = grad_out.clone();
    for (g, &x) in gi.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(gi)
}

/// `(B, C, H, W) -> (B, C·H·W)`.
pub fn flatten_forward(input: &Tensor) -> Result<Tensor> {
    let s = input.shape();
    let features: usize = s[1..].iter().product();
    input.clone().reshape(&[s[0], features])
}

pub fn flatten_backward(grad_out: &Tensor, input_shape: &[usize]) -> Result<Tensor> {
    grad_out.clone().reshape(input_shape)
}

#[derive(Clone, Debug, Default)]
pub struct Relu {
    input: Option<Tensor>,
}

impl Relu {
    pub fn forward(&mut self, input: &Tensor) -> Tensor {
        self.input = Some(input.clone());
        relu_forward(input)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let input = self.input.as_ref().ok_or(Error::NoForwardCache("relu"))?;
        relu_backward(grad_out, input)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Flatten {
    input_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        self.input_shape = Some(input.shape().to_vec());
        flatten_forward(input)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let shape = self.input_shape.as_ref().ok_or(Error::NoForwardCache("flatten"))?;
        flatten_backward(grad_out, shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values() {
        let x = Tensor::from_values(&[2], vec![-1.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 2.0]);
        let g = Tensor::full(&[2], 5.0).unwrap();
        assert_eq!(relu_backward(&g, &x).unwrap().data(), &[0.0, 5.0]);
    }

    #[test]
    fn flatten_round_trip() {
        let x = Tensor::from_values(&[2, 3, 2, 2], (0..24).map(f64::from).collect()).unwrap();
        let mut f = Flatten::default();
        let y = f.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 12]);
        assert_eq!(f.backward(&y).unwrap(), x);
    }
}
