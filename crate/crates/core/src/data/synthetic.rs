//! Class-dependent oriented stripe patches on a dark 28×28 canvas.
//!
//! Classes are split into `⌈C/2⌉` orientations × two stripe periods: class `c`
//! draws a sinusoidal grating at angle `π·(c mod O)/O` (`O = ⌈C/2⌉`), with a
//! period of 4 pixels for the first `O` classes and 8 for the rest, inside a
//! soft-edged disc of radius 12 whose centre is jittered by up to ±2 pixels.
//! Phase is random and uniform noise of amplitude 0.1 is added before
//! clamping to `[0, 1]`. Labels cycle `0, 1, …, C-1` so every class is equally
//! represented when `n` is a multiple of `C`.

use std::f64::consts::PI;

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

const SIDE: usize = 28;
const RADIUS: f64 = 12.0;
const PERIOD: f64 = 4.0;
const NOISE: f64 = 0.1;

pub fn synthetic_dataset(seed: u64, n: usize, classes: usize) -> Result<Dataset> {
    if n == 0 || classes == 0 {
        return Err(Error::Config(format!("synthetic dataset needs n >= 1 and classes >= 1, got {n} and {classes}")));
    }
    let mut rng = SplitMix64::new(seed);
    let mut pixels = Vec::with_capacity(n * SIDE * SIDE);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % classes;
        let orientations = classes.div_ceil(2);
        let theta = PI * (class % orientations) as f64 / orientations as f64;
        let period = if class < orientations { PERIOD } else { 2.0 * PERIOD };
        let (s, c) = theta.sin_cos();
        let cy = 13.5 + rng.uniform(-2.0, 2.0);
        let cx = 13.5 + rng.uniform(-2.0, 2.0);
        let phase = rng.uniform(0.0, 2.0 * PI);
        for y in 0..SIDE {
            for x in 0..SIDE {
                let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                let r = (dy * dy + dx * dx).sqrt();
                let envelope = (RADIUS + 1.0 - r).clamp(0.0, 1.0);
                let along = dx * c + dy * s;
                let stripe = 0.5 + 0.5 * (2.0 * PI * along / period + phase).sin();
                let noise = rng.uniform(-NOISE, NOISE);
                pixels.push((envelope * stripe + noise).clamp(0.0, 1.0));
            }
        }
        labels.push(class);
    }
    Dataset::new(Tensor::from_values(&[n, 1, SIDE, SIDE], pixels)?, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        assert_eq!(synthetic_dataset(5, 20, 10).unwrap(), synthetic_dataset(5, 20, 10).unwrap());
        assert_ne!(synthetic_dataset(5, 20, 10).unwrap(), synthetic_dataset(6, 20, 10).unwrap());
    }

    #[test]
    fn balanced_labels() {
        let d = synthetic_dataset(1, 30, 10).unwrap();
        for c in 0..10 {
            assert_eq!(d.labels.iter().filter(|&&l| l == c).count(), 3);
        }
        assert!(d.images.data().iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn empty_rejected() {
        assert!(synthetic_dataset(1, 0, 10).is_err());
        assert!(synthetic_dataset(1, 10, 0).is_err());
    }
}
