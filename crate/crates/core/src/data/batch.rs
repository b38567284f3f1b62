use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// Shuffled mini-batch schedule. Epoch `e` uses the permutation drawn from
/// `SplitMix64::derive(seed, e)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchPlan {
    pub seed: u64,
    pub batch_size: usize,
}

impl BatchPlan {
    pub fn new(seed: u64, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(BatchPlan { seed, batch_size })
    }

    pub fn epoch_order(&self, n: usize, epoch: usize) -> Vec<usize> {
        SplitMix64::derive(self.seed, epoch as u64).permutation(n)
    }
}

pub struct Batches<'a> {
    dataset: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Iterator for Batches<'_> {
    type Item = (Tensor, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let idx = &self.order[self.pos..end];
        self.pos = end;
        Some(self.dataset.gather(idx).expect("epoch order indexes the dataset"))
    }
}

/// Batches for one epoch; the last batch may be smaller.
pub fn batches<'a>(dataset: &'a Dataset, plan: &BatchPlan, epoch: usize) -> Result<Batches<'a>> {
    if plan.batch_size > dataset.len() {
        return Err(Error::Config(format!(
            "batch size {} exceeds dataset size {}",
            plan.batch_size,
            dataset.len()
        )));
    }
    Ok(Batches {
        dataset,
        order: plan.epoch_order(dataset.len(), epoch),
        batch_size: plan.batch_size,
        pos: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_dataset;

    #[test]
    fn full_batch_is_permutation() {
        let d = synthetic_dataset(3, 12, 4).unwrap();
        let plan = BatchPlan::new(9, 12).unwrap();
        let all: Vec<_> = batches(&d, &plan, 0).unwrap().collect();
        assert_eq!(all.len(), 1);
        let mut labels = all[0].1.clone();
        labels.sort_unstable();
        let mut want = d.labels.clone();
        want.sort_unstable();
        assert_eq!(labels, want);
    }

    #[test]
    fn partial_last_batch_and_determinism() {
        let d = synthetic_dataset(3, 10, 5).unwrap();
        let plan = BatchPlan::new(1, 4).unwrap();
        let sizes: Vec<usize> = batches(&d, &plan, 0).unwrap().map(|(_, y)| y.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        let a: Vec<_> = batches(&d, &plan, 2).unwrap().collect();
        let b: Vec<_> = batches(&d, &plan, 2).unwrap().collect();
        assert_eq!(a, b);
        assert_ne!(plan.epoch_order(10, 0), plan.epoch_order(10, 1));
    }

    #[test]
    fn oversized_batch_rejected() {
        let d = synthetic_dataset(3, 4, 2).unwrap();
        assert!(batches(&d, &BatchPlan::new(0, 5).unwrap(), 0).is_err());
        assert!(BatchPlan::new(0, 0).is_err());
    }
}
