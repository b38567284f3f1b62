//! CSV metrics.
//!
//! Columns, in order: `run_id, seed, variant, epoch, step, train_loss,
//! train_err_pct, test_err_pct`, then `w_l{layer}_k{k}` for every sorted
//! pooling layer (1-based) and rank, holding the channel-averaged softmax
//! weights. Runs without sorted pooling leave those cells empty.

use std::io::Write;

use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub run_id: String,
    pub seed: u64,
    pub variant: String,
    pub epoch: usize,
    pub step: usize,
    pub train_loss: f64,
    pub train_err_pct: f64,
    pub test_err_pct: f64,
    /// Mean normalized weights, one vector per sorted pooling layer.
    pub mean_weights: Vec<Vec<f64>>,
}

pub const BASE_COLUMNS: [&str; 8] = [
    "run_id",
    "seed",
    "variant",
    "epoch",
    "step",
    "train_loss",
    "train_err_pct",
    "test_err_pct",
];

pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
    layout: Vec<usize>,
}

impl<W: Write> MetricsWriter<W> {
    /// `layout[l]` is the number of weight columns for sorted layer `l`.
    pub fn new(sink: W, layout: Vec<usize>) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(sink);
        let mut header: Vec<String> = BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
        for (l, &k) in layout.iter().enumerate() {
            header.extend((1..=k).map(|k| format!("w_l{}_k{}", l + 1, k)));
        }
        inner.write_record(&header)?;
        Ok(MetricsWriter { inner, layout })
    }

    pub fn write(&mut self, row: &RunRow) -> Result<()> {
        let mut rec = vec![
            row.run_id.clone(),
            row.seed.to_string(),
            row.variant.clone(),
            row.epoch.to_string(),
            row.step.to_string(),
            row.train_loss.to_string(),
            row.train_err_pct.to_string(),
            row.test_err_pct.to_string(),
        ];
        for (l, &k) in self.layout.iter().enumerate() {
            let w = row.mean_weights.get(l);
            rec.extend((0..k).map(|j| w.and_then(|w| w.get(j)).map_or_else(String::new, f64::to_string)));
        }
        self.inner.write_record(&rec)?;
        self.inner.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| crate::HarnessError::Csv(csv::Error::from(e.into_error())))
    }
}

/// Column-wise union: per layer, the largest K seen.
pub fn merge_layouts<'a>(layouts: impl IntoIterator<Item = &'a [usize]>) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for l in layouts {
        if out.len() < l.len() {
            out.resize(l.len(), 0);
        }
        for (o, &k) in out.iter_mut().zip(l) {
            *o = (*o).max(k);
        }
    }
    out
}
