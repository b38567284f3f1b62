//! Versioned binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic  "SPCK"      4 bytes
//! version u32
//! size    u64        total file length in bytes
//! hash    u64        FNV-1a of the architecture descriptor
//! count   u32        number of tensors
//! per tensor: name_len u32, name utf-8, ndim u32, dims u64 × ndim, values f64 × prod(dims)
//! ```

use std::path::Path;

use sortpool::layers::LayerGraph;
use sortpool::Tensor;
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::network::{architecture_descriptor, build_network};
use crate::{HarnessError, Result};

pub const MAGIC: [u8; 4] = *b"SPCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("checkpoint version {found}, this build reads version {expected}")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint declares {declared} bytes but has {actual}")]
    Size { declared: u64, actual: u64 },
    #[error("architecture hash mismatch (checkpoint {found:016x}, config {expected:016x})")]
    ArchitectureHash { found: u64, expected: u64 },
    #[error("tensor {name}: checkpoint shape {found:?}, network shape {expected:?}")]
    Shape {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("tensor set mismatch: {0}")]
    Tensors(String),
    #[error("truncated checkpoint while reading {0}")]
    Truncated(&'static str),
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

pub fn encode(graph: &LayerGraph, descriptor: &str) -> Vec<u8> {
    let params = graph.param_values();
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u64.to_le_bytes()); // patched below
    out.extend_from_slice(&fnv1a(descriptor.as_bytes()).to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let size = out.len() as u64;
    out[8..16].copy_from_slice(&size.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> std::result::Result<&'a [u8], CheckpointError> {
        if self.buf.len() < n {
            return Err(CheckpointError::Truncated(what));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }
    fn u32(&mut self, what: &'static str) -> std::result::Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self, what: &'static str) -> std::result::Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

/// Parses `bytes` into named tensors after checking magic, version, size and hash.
pub fn decode(bytes: &[u8], descriptor: &str) -> std::result::Result<Vec<(String, Tensor)>, CheckpointError> {
    let mut r = Reader { buf: bytes };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: VERSION,
        });
    }
    let declared = r.u64("size")?;
    if declared != bytes.len() as u64 {
        return Err(CheckpointError::Size {
            declared,
            actual: bytes.len() as u64,
        });
    }
    let found = r.u64("hash")?;
    let expected = fnv1a(descriptor.as_bytes());
    if found != expected {
        return Err(CheckpointError::ArchitectureHash { found, expected });
    }
    let count = r.u32("tensor count")?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let n = r.u32("name length")? as usize;
        let name = String::from_utf8_lossy(r.take(n, "name")?).into_owned();
        let ndim = r.u32("rank")? as usize;
        let shape = (0..ndim)
            .map(|_| r.u64("dims").map(|d| d as usize))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let len: usize = shape.iter().product();
        let raw = r.take(len.checked_mul(8).ok_or(CheckpointError::Truncated("values"))?, "values")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::from_values(&shape, data).map_err(|e| CheckpointError::Tensors(e.to_string()))?;
        out.push((name, t));
    }
    if !r.buf.is_empty() {
        return Err(CheckpointError::Tensors(format!("{} trailing bytes", r.buf.len())));
    }
    Ok(out)
}

/// Copies decoded tensors into `graph`, requiring the same names and shapes.
pub fn restore(graph: &mut LayerGraph, tensors: Vec<(String, Tensor)>) -> std::result::Result<(), CheckpointError> {
    let mut params = graph.params_mut();
    if params.len() != tensors.len() {
        return Err(CheckpointError::Tensors(format!(
            "checkpoint has {} tensors, network has {}",
            tensors.len(),
            params.len()
        )));
    }
    for (p, (name, t)) in params.iter_mut().zip(tensors) {
        if p.name != name {
            return Err(CheckpointError::Tensors(format!("expected {}, found {name}", p.name)));
        }
        if p.value.shape() != t.shape() {
            return Err(CheckpointError::Shape {
                name,
                found: t.shape().to_vec(),
                expected: p.value.shape().to_vec(),
            });
        }
        *p.value = t;
    }
    Ok(())
}

pub fn save(path: &Path, graph: &LayerGraph, cfg: &ExperimentConfig, input: (usize, usize)) -> Result<()> {
    let bytes = encode(graph, &architecture_descriptor(cfg, input));
    std::fs::write(path, bytes).map_err(HarnessError::io(path))
}

/// Builds the network described by `cfg` and loads the checkpoint into it.
pub fn load(path: &Path, cfg: &ExperimentConfig, input: (usize, usize)) -> Result<LayerGraph> {
    let bytes = std::fs::read(path).map_err(HarnessError::io(path))?;
    let tensors = decode(&bytes, &architecture_descriptor(cfg, input))?;
    let mut graph = build_network(cfg, input)?;
    restore(&mut graph, tensors)?;
    Ok(graph)
}
