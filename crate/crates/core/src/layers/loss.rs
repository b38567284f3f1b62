use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean softmax cross-entropy over the batch and its gradient `(softmax - onehot) / B`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let s = logits.shape();
    if s.len() != 2 || s[0] != labels.len() {
        return Err(Error::shape("softmax_cross_entropy", s, &[labels.len()]));
    }
    let (batch, classes) = (s[0], s[1]);
    let mut grad = logits.zeros_like();
    let mut loss = 0.0;
    let scale = 1.0 / batch as f64;
    for ((row, g), &label) in logits
        .data()
        .chunks_exact(classes)
        .zip(grad.data_mut().chunks_exact_mut(classes))
        .zip(labels)
    {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = row.iter().map(|v| (v - m).exp()).sum();
        let log_z = m + total.ln();
        loss += log_z - row[label];
        for (gi, &v) in g.iter_mut().zip(row) {
            *gi = (v - log_z).exp() * scale;
        }
        g[label] -= scale;
    }
    Ok((loss * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_classes() {
        let logits = Tensor::zeros(&[3, 10]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 4, 9]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logits_give_near_zero_loss() {
        let mut v = vec![0.0; 10];
        v[3] = 100.0;
        let logits = Tensor::from_values(&[1, 10], v).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &[3]).unwrap();
        assert!(loss < 1e-40);
        assert!(grad.data().iter().all(|g| g.abs() < 1e-40));
    }

    #[test]
    fn label_out_of_range() {
        let logits = Tensor::zeros(&[1, 10]).unwrap();
        assert!(matches!(
            softmax_cross_entropy(&logits, &[10]),
            Err(Error::LabelOutOfRange { label: 10, classes: 10 })
        ));
    }
}
