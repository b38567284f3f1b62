//! Central finite differences, the reference for every backward pass.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-6;
/// Floor on the relative-error denominator.
pub const REL_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub max_relative_error: f64,
    pub worst_coordinate: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn finite_diff(mut f: impl FnMut(&Tensor) -> f64, x: &Tensor, h: f64) -> Result<Tensor> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = x.clone();
    let mut grad = x.zeros_like();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("objective while probing coordinate {i}")));
        }
        grad.data_mut()[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

/// Per-coordinate `|a - n| / max(1e-8, |a| + |n|)`, reporting the worst.
pub fn compare(analytic: &Tensor, numeric: &Tensor) -> Result<GradReport> {
    if analytic.shape() != numeric.shape() {
        return Err(Error::shape("gradcheck compare", analytic.shape(), numeric.shape()));
    }
    let mut report = GradReport {
        max_relative_error: 0.0,
        worst_coordinate: 0,
        analytic: analytic.data()[0],
        numeric: numeric.data()[0],
    };
    for (i, (&a, &n)) in analytic.data().iter().zip(numeric.data()).enumerate() {
        let err = (a - n).abs() / REL_FLOOR.max(a.abs() + n.abs());
        if err > report.max_relative_error {
            report = GradReport {
                max_relative_error: err,
                worst_coordinate: i,
                analytic: a,
                numeric: n,
            };
        }
    }
    Ok(report)
}

/// Random values with pairwise gaps far above the probe step.
///
/// Draws uniform values in `[-1, 1]` and adds a distinct offset `i·1e-4` to
/// the `i`-th value in ascending order, so neighbours in sorted order sit at
/// least `1e-4` apart and a `±h` probe cannot reorder a window.
pub fn tie_free(rng: &mut SplitMix64, shape: &[usize]) -> Result<Tensor> {
    let n: usize = shape.iter().product();
    let mut values: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    for (rank, &i) in order.iter().enumerate() {
        values[i] += rank as f64 * 1e-4;
    }
    Tensor::from_values(shape, values)
}
