//! Dense row-major `f64` tensors.
//!
//! Image batches use the `(batch, channel, height, width)` convention. Spatial
//! operations (pooling, convolution) treat every leading `(batch, channel)`
//! pair as an independent plane and work on the trailing two axes.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn validate_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::InvalidShape {
            shape: vec![],
            reason: "tensor needs at least one dimension".into(),
        });
    }
    if shape.contains(&0) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "all extents must be >= 1".into(),
        });
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        let len = validate_shape(shape)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        })
    }

    pub fn from_values(shape: &[usize], values: Vec<f64>) -> Result<Self> {
        let len = validate_shape(shape)?;
        if values.len() != len {
            return Err(Error::shape("from_values", shape, &[values.len()]));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: values,
        })
    }

    /// Zeros with the same shape as `self`.
    pub fn zeros_like(&self) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Row-major linear offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() || index.iter().zip(&self.shape).any(|(i, d)| i >= d) {
            return Err(Error::shape("index", &self.shape, index));
        }
        Ok(index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| acc * d + i))
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.data[self.offset(index)?])
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len = validate_shape(shape)?;
        if len != self.data.len() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    fn zip_with(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(op, &self.shape, &other.shape));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape("add_assign", &self.shape, &other.shape));
        }
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Matrix product of two 2-D tensors.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        match (self.shape.as_slice(), other.shape.as_slice()) {
            (&[m, k], &[k2, n]) if k == k2 => {
                let mut out = vec![0.0; m * n];
                gemm(m, k, n, &self.data, &other.data, &mut out);
                Tensor::from_values(&[m, n], out)
            }
            _ => Err(Error::shape("matmul", &self.shape, &other.shape)),
        }
    }

    /// Index of the largest entry along the last axis; first occurrence wins.
    pub fn argmax_along_last(&self) -> Vec<usize> {
        let last = *self.shape.last().expect("tensor has at least one axis");
        self.data
            .chunks_exact(last)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                    .0
            })
            .collect()
    }

    /// Iterates over every fully contained `kernel` window of the trailing two
    /// axes, plane by plane.
    pub fn window_iter(&self, kernel: (usize, usize), stride: (usize, usize)) -> Result<WindowIter<'_>> {
        let geom = WindowGeometry::for_shape(&self.shape, kernel, stride)?;
        Ok(WindowIter {
            tensor: self,
            geom,
            next: 0,
        })
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor{:?} [", self.shape)?;
        for (i, v) in self.data.iter().take(SHOWN).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        if self.data.len() > SHOWN {
            write!(f, ", ... ({} values)", self.data.len())?;
        }
        write!(f, "]")
    }
}

/// `out += a (m×k) · b (k×n)`, row-major.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
}

/// Linear indices into a companion [`Tensor`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexTensor {
    shape: Vec<usize>,
    data: Vec<usize>,
}

impl IndexTensor {
    pub fn new(shape: &[usize], data: Vec<usize>) -> Result<Self> {
        let len = validate_shape(shape)?;
        if data.len() != len {
            return Err(Error::shape("IndexTensor::new", shape, &[data.len()]));
        }
        Ok(IndexTensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[usize] {
        &self.data
    }

    /// Checks every index is in range for a companion tensor of `shape`.
    pub fn check_bounds(&self, shape: &[usize]) -> Result<()> {
        let limit: usize = shape.iter().product();
        if self.data.iter().any(|&i| i >= limit) {
            return Err(Error::shape("IndexTensor bounds", &self.shape, shape));
        }
        Ok(())
    }
}

/// Window layout shared by pooling, convolution and [`WindowIter`].
///
/// `offsets` stores, for each output cell in row-major order, the in-plane
/// offsets of its window elements in row-major window order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowGeometry {
    pub planes: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub out_height: usize,
    pub out_width: usize,
    offsets: Vec<usize>,
}

/// Valid-window output extent: `floor((n - k) / s) + 1`.
pub fn valid_extent(n: usize, k: usize, s: usize) -> Option<usize> {
    if k == 0 || s == 0 || n < k {
        None
    } else {
        Some((n - k) / s + 1)
    }
}

impl WindowGeometry {
    pub fn new(height: usize, width: usize, kernel: (usize, usize), stride: (usize, usize)) -> Result<Self> {
        let (kh, kw) = kernel;
        let (sh, sw) = stride;
        let (Some(out_height), Some(out_width)) = (valid_extent(height, kh, sh), valid_extent(width, kw, sw)) else {
            return Err(Error::Config(format!(
                "kernel {kh}x{kw} with stride {sh}x{sw} does not fit a {height}x{width} input"
            )));
        };
        let mut offsets = Vec::with_capacity(out_height * out_width * kh * kw);
        for oy in 0..out_height {
            for ox in 0..out_width {
                for dy in 0..kh {
                    for dx in 0..kw {
                        offsets.push((oy * sh + dy) * width + ox * sw + dx);
                    }
                }
            }
        }
        Ok(WindowGeometry {
            planes: 1,
            height,
            width,
            kernel,
            stride,
            out_height,
            out_width,
            offsets,
        })
    }

    /// Geometry over the trailing two axes of `shape`; leading axes become planes.
    pub fn for_shape(shape: &[usize], kernel: (usize, usize), stride: (usize, usize)) -> Result<Self> {
        if shape.len() < 2 {
            return Err(Error::InvalidShape {
                shape: shape.to_vec(),
                reason: "windowing needs at least two axes".into(),
            });
        }
        let n = shape.len();
        let mut geom = Self::new(shape[n - 2], shape[n - 1], kernel, stride)?;
        geom.planes = shape[..n - 2].iter().product();
        Ok(geom)
    }

    pub fn window_len(&self) -> usize {
        self.kernel.0 * self.kernel.1
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn cells(&self) -> usize {
        self.out_height * self.out_width
    }

    /// In-plane offsets of the window for output cell `cell`.
    #[inline]
    pub fn window(&self, cell: usize) -> &[usize] {
        let n = self.window_len();
        &self.offsets[cell * n..(cell + 1) * n]
    }
}

/// One window yielded by [`Tensor::window_iter`].
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub plane: usize,
    pub out_row: usize,
    pub out_col: usize,
    pub values: Vec<f64>,
    /// Linear indices into the full tensor.
    pub indices: Vec<usize>,
}

pub struct WindowIter<'a> {
    tensor: &'a Tensor,
    geom: WindowGeometry,
    next: usize,
}

impl WindowIter<'_> {
    pub fn geometry(&self) -> &WindowGeometry {
        &self.geom
    }
}

impl Iterator for WindowIter<'_> {
    type Item = Window;

    fn next(&mut self) -> Option<Window> {
        let cells = self.geom.cells();
        if self.next >= self.geom.planes * cells {
            return None;
        }
        let (plane, cell) = (self.next / cells, self.next % cells);
        self.next += 1;
        let base = plane * self.geom.plane_len();
        let indices: Vec<usize> = self.geom.window(cell).iter().map(|o| base + o).collect();
        Some(Window {
            plane,
            out_row: cell / self.geom.out_width,
            out_col: cell % self.geom.out_width,
            values: indices.iter().map(|&i| self.tensor.data[i]).collect(),
            indices,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.geom.planes * self.geom.cells() - self.next;
        (left, Some(left))
    }
}

impl ExactSizeIterator for WindowIter<'_> {}
