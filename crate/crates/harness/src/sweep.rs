//! Paired comparisons of pooling variants.
//!
//! Replicate `r` of every variant trains with seed `cfg.seed + r`, so variants
//! see the same batch order and the same conv/dense initial weights; only the
//! pooling operator differs.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use sortpool::PoolMode;

use crate::config::{pool_name, ConfigError, ExperimentConfig};
use crate::metrics::{merge_layouts, MetricsWriter};
use crate::train::{load_data, train_run, weight_layout, Data, RunOutput};
use crate::{HarnessError, Result};

#[derive(Clone, Debug)]
pub struct SweepRun {
    pub variant: PoolMode,
    pub seed: u64,
    pub output: RunOutput,
}

#[derive(Clone, Debug)]
pub struct Sweep {
    pub variants: Vec<PoolMode>,
    pub seeds: Vec<u64>,
    pub runs: Vec<SweepRun>,
}

impl Sweep {
    pub fn run(&self, variant: PoolMode, seed: u64) -> Option<&RunOutput> {
        self.runs
            .iter()
            .find(|r| r.variant == variant && r.seed == seed)
            .map(|r| &r.output)
    }

    /// End-of-epoch test error per seed, in seed order.
    pub fn test_errors(&self, variant: PoolMode, epoch: usize) -> Vec<f64> {
        self.seeds
            .iter()
            .map(|&s| self.run(variant, s).and_then(|r| r.test_err_at_epoch(epoch)).unwrap_or(f64::NAN))
            .collect()
    }

    pub fn epochs(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self
            .runs
            .iter()
            .flat_map(|r| r.output.rows.iter().map(|row| row.epoch))
            .collect();
        set.into_iter().collect()
    }
}

pub fn replicate_seeds(cfg: &ExperimentConfig) -> Vec<u64> {
    (0..cfg.replicates as u64).map(|r| cfg.seed.wrapping_add(r)).collect()
}

pub fn run_sweep<W: Write>(cfg: &ExperimentConfig, variants: &[PoolMode], data: &Data, mut sink: Option<&mut MetricsWriter<W>>) -> Result<Sweep> {
    if variants.len() < 2 {
        return Err(ConfigError::Invalid("a sweep needs at least two variants".into()).into());
    }
    let seeds = replicate_seeds(cfg);
    let mut runs = Vec::new();
    for &seed in &seeds {
        for &variant in variants {
            let run_cfg = ExperimentConfig {
                pool: variant,
                seed,
                ..cfg.clone()
            };
            let output = train_run(&run_cfg, data, sink.as_deref_mut())?;
            runs.push(SweepRun { variant, seed, output });
        }
    }
    Ok(Sweep {
        variants: variants.to_vec(),
        seeds,
        runs,
    })
}

/// One row per `(seed, epoch)`, one test-error column per variant.
pub fn write_comparison<W: Write>(sweep: &Sweep, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["seed".to_string(), "epoch".to_string()];
    header.extend(sweep.variants.iter().map(|&v| format!("{}_test_err_pct", pool_name(v))));
    w.write_record(&header)?;
    for epoch in sweep.epochs() {
        let cols: Vec<Vec<f64>> = sweep.variants.iter().map(|&v| sweep.test_errors(v, epoch)).collect();
        for (i, seed) in sweep.seeds.iter().enumerate() {
            let mut rec = vec![seed.to_string(), epoch.to_string()];
            rec.extend(cols.iter().map(|c| c[i].to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Mean test error per variant and epoch, as a plain-text table.
pub fn summary(sweep: &Sweep) -> String {
    let mut s = format!("{:>6}", "epoch");
    for &v in &sweep.variants {
        s.push_str(&format!(" {:>12}", pool_name(v)));
    }
    s.push('\n');
    for epoch in sweep.epochs() {
        s.push_str(&format!("{epoch:>6}"));
        for &v in &sweep.variants {
            let e = sweep.test_errors(v, epoch);
            s.push_str(&format!(" {:>11.2}%", e.iter().sum::<f64>() / e.len() as f64));
        }
        s.push('\n');
    }
    s
}

/// Loads data, runs the sweep and writes `metrics.csv` and `comparison.csv`
/// into `out_dir`.
pub fn sweep_to_dir(cfg: &ExperimentConfig, variants: &[PoolMode], out_dir: &Path) -> Result<Sweep> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    std::fs::create_dir_all(out_dir).map_err(HarnessError::io(out_dir))?;
    let input = data.train.image_size();
    let layouts = variants
        .iter()
        .map(|&v| weight_layout(&ExperimentConfig { pool: v, ..cfg.clone() }, input))
        .collect::<Result<Vec<_>>>()?;
    let metrics_path = out_dir.join("metrics.csv");
    let file = std::fs::File::create(&metrics_path).map_err(HarnessError::io(&metrics_path))?;
    let mut writer = MetricsWriter::new(file, merge_layouts(layouts.iter().map(Vec::as_slice)))?;
    let sweep = run_sweep(cfg, variants, &data, Some(&mut writer))?;
    let cmp_path = out_dir.join("comparison.csv");
    let file = std::fs::File::create(&cmp_path).map_err(HarnessError::io(&cmp_path))?;
    write_comparison(&sweep, file)?;
    Ok(sweep)
}
