//! Image datasets, IDX loading, synthetic data and deterministic batching.

mod batch;
mod idx;
mod synthetic;

pub use batch::{batches, BatchPlan, Batches};
pub use idx::{encode_idx_images, encode_idx_labels, load_idx, load_mnist_dir, IMAGE_MAGIC, LABEL_MAGIC};
pub use synthetic::synthetic_dataset;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Images `(N, 1, H, W)` with pixels in `[0, 1]` and one label per image.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>) -> Result<Self> {
        let s = images.shape();
        if s.len() != 4 || s[1] != 1 {
            return Err(Error::InvalidShape {
                shape: s.to_vec(),
                reason: "dataset images are (N, 1, H, W)".into(),
            });
        }
        if s[0] != labels.len() {
            return Err(Error::CountMismatch {
                images: s[0],
                labels: labels.len(),
            });
        }
        if images.data().iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("pixel values must lie in [0, 1]".into()));
        }
        Ok(Dataset { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `(H, W)` of every image.
    pub fn image_size(&self) -> (usize, usize) {
        let s = self.images.shape();
        (s[2], s[3])
    }

    fn image_len(&self) -> usize {
        let (h, w) = self.image_size();
        h * w
    }

    /// Stacks the given examples into a batch tensor plus labels.
    pub fn gather(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let len = self.image_len();
        let (h, w) = self.image_size();
        let mut data = Vec::with_capacity(indices.len() * len);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::shape("dataset gather", &[i], &[self.len()]));
            }
            data.extend_from_slice(&self.images.data()[i * len..(i + 1) * len]);
            labels.push(self.labels[i]);
        }
        Ok((Tensor::from_values(&[indices.len(), 1, h, w], data)?, labels))
    }

    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let (images, labels) = self.gather(indices)?;
        Ok(Dataset { images, labels })
    }

    /// The first `n` examples (or all, if fewer).
    pub fn head(&self, n: usize) -> Result<Dataset> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    /// Examples whose label is in `classes`, original order kept.
    pub fn filter_classes(&self, classes: &[usize]) -> Result<Dataset> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| classes.contains(&self.labels[i])).collect();
        self.select(&idx)
    }
}
