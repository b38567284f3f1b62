//! Data loading, the SGD training loop and evaluation.

use std::io::Write;

use sortpool::data::{batches, load_mnist_dir, synthetic_dataset, BatchPlan, Dataset};
use sortpool::layers::{softmax_cross_entropy, LayerGraph};
use sortpool::optim::{SgdConfig, SgdState};
use sortpool::Tensor;

use crate::config::{pool_name, DatasetKind, ExperimentConfig};
use crate::metrics::{MetricsWriter, RunRow};
use crate::network::{build_network, CLASSES};
use crate::{HarnessError, Result};

// Synthetic data is fixed across replicate seeds; only init and order vary.
const SYNTHETIC_TRAIN_SEED: u64 = 0x5eed_0001;
const SYNTHETIC_TEST_SEED: u64 = 0x5eed_0002;

#[derive(Clone, Debug)]
pub struct Data {
    pub train: Dataset,
    pub test: Dataset,
}

/// Loads the configured dataset, then applies class filtering and subsets.
///
/// `train_classes` restricts the training split only; the test split keeps
/// the same classes so test error is measured on the training task.
pub fn load_data(cfg: &ExperimentConfig) -> Result<Data> {
    let (mut train, mut test) = match cfg.dataset {
        DatasetKind::Mnist => (load_mnist_dir(&cfg.data_dir, true)?, load_mnist_dir(&cfg.data_dir, false)?),
        DatasetKind::Synthetic => (
            synthetic_dataset(SYNTHETIC_TRAIN_SEED, cfg.synthetic_train, CLASSES)?,
            synthetic_dataset(SYNTHETIC_TEST_SEED, cfg.synthetic_test, CLASSES)?,
        ),
    };
    if !cfg.train_classes.is_empty() {
        train = train.filter_classes(&cfg.train_classes)?;
        test = test.filter_classes(&cfg.train_classes)?;
    }
    if let Some(n) = cfg.subset {
        train = train.head(n.min(train.len()))?;
    }
    if let Some(n) = cfg.test_subset {
        test = test.head(n.min(test.len()))?;
    }
    Ok(Data { train, test })
}

/// Held-out split for episodic evaluation: the test images of `eval_classes`.
pub fn load_eval_split(cfg: &ExperimentConfig) -> Result<Dataset> {
    let test = match cfg.dataset {
        DatasetKind::Mnist => load_mnist_dir(&cfg.data_dir, false)?,
        DatasetKind::Synthetic => synthetic_dataset(SYNTHETIC_TEST_SEED, cfg.synthetic_test, CLASSES)?,
    };
    Ok(test.filter_classes(&cfg.eval_classes)?)
}

pub fn sgd_config(cfg: &ExperimentConfig) -> SgdConfig {
    SgdConfig {
        learning_rate: cfg.learning_rate,
        momentum: cfg.momentum,
        weight_decay: cfg.weight_decay,
        pool_learning_rate: cfg.pool_learning_rate,
        pool_weight_decay: cfg.pool_weight_decay,
    }
}

fn argmax_errors(logits: &Tensor, labels: &[usize]) -> usize {
    let preds = logits.argmax_along_last();
    preds.iter().zip(labels).filter(|(p, l)| p != l).count()
}

/// Classification error in percent, evaluated in chunks of `chunk`.
pub fn error_rate(graph: &LayerGraph, data: &Dataset, chunk: usize) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut wrong = 0;
    let idx: Vec<usize> = (0..data.len()).collect();
    for part in idx.chunks(chunk.max(1)) {
        let (x, y) = data.gather(part)?;
        wrong += argmax_errors(&graph.infer(&x)?, &y);
    }
    Ok(100.0 * wrong as f64 / data.len() as f64)
}

pub fn mean_weights(graph: &LayerGraph) -> Result<Vec<Vec<f64>>> {
    Ok(graph
        .sorted_pools()
        .iter()
        .map(|p| p.mean_normalized())
        .collect::<sortpool::Result<_>>()?)
}

/// Weight-column layout (K per sorted layer) for a network built from `cfg`.
pub fn weight_layout(cfg: &ExperimentConfig, input: (usize, usize)) -> Result<Vec<usize>> {
    Ok(build_network(cfg, input)?.sorted_pools().iter().map(|p| p.k()).collect())
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub rows: Vec<RunRow>,
    /// Mini-batch loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
    pub graph: LayerGraph,
}

impl RunOutput {
    pub fn final_test_err(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.test_err_pct)
    }

    pub fn test_err_at_epoch(&self, epoch: usize) -> Option<f64> {
        self.rows.iter().rev().find(|r| r.epoch == epoch).map(|r| r.test_err_pct)
    }
}

pub fn run_id(cfg: &ExperimentConfig) -> String {
    format!("{}-s{}", pool_name(cfg.pool), cfg.seed)
}

/// Trains one network from scratch with `cfg.seed`.
///
/// A row is emitted at the end of every epoch and, if `log_every > 0`, every
/// `log_every` steps. `train_loss` / `train_err_pct` are running means over the
/// mini-batches since the previous row, measured before each update.
pub fn train_run<W: Write>(cfg: &ExperimentConfig, data: &Data, mut sink: Option<&mut MetricsWriter<W>>) -> Result<RunOutput> {
    cfg.validate()?;
    let mut graph = build_network(cfg, data.train.image_size())?;
    let mut sgd = SgdState::new(sgd_config(cfg))?;
    let plan = BatchPlan::new(cfg.seed, cfg.batch_size)?;
    let variant = pool_name(cfg.pool);
    let id = run_id(cfg);

    let mut rows = Vec::new();
    let mut step_losses = Vec::new();
    let mut step = 0;
    let (mut loss_sum, mut wrong, mut seen, mut batches_since) = (0.0, 0usize, 0usize, 0usize);

    for epoch in 0..cfg.epochs {
        let mut it = batches(&data.train, &plan, epoch)?.peekable();
        while let Some((x, y)) = it.next() {
            let logits = graph.forward(&x)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &y)?;
            step += 1;
            if !loss.is_finite() {
                let layer = match graph.first_non_finite(&x)? {
                    Some(i) => format!("layer{i} ({})", graph.layers[i].name()),
                    None => "the loss".to_string(),
                };
                return Err(HarnessError::Diverged { step, layer });
            }
            graph.backward(&grad)?;
            sgd.step(&mut graph.params_mut()).map_err(|e| match e {
                sortpool::Error::NonFinite(what) => HarnessError::Diverged { step, layer: what },
                e => e.into(),
            })?;

            step_losses.push(loss);
            loss_sum += loss;
            wrong += argmax_errors(&logits, &y);
            seen += y.len();
            batches_since += 1;

            let epoch_end = it.peek().is_none();
            let periodic = cfg.log_every > 0 && step % cfg.log_every == 0;
            if epoch_end || periodic {
                let row = RunRow {
                    run_id: id.clone(),
                    seed: cfg.seed,
                    variant: variant.clone(),
                    epoch: epoch + 1,
                    step,
                    train_loss: loss_sum / batches_since as f64,
                    train_err_pct: 100.0 * wrong as f64 / seen as f64,
                    test_err_pct: error_rate(&graph, &data.test, cfg.eval_batch)?,
                    mean_weights: mean_weights(&graph)?,
                };
                if let Some(w) = sink.as_deref_mut() {
                    w.write(&row)?;
                }
                rows.push(row);
                (loss_sum, wrong, seen, batches_since) = (0.0, 0, 0, 0);
            }
        }
    }
    Ok(RunOutput {
        rows,
        step_losses,
        graph,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use sortpool::PoolMode;

    fn tiny(pool: PoolMode) -> (ExperimentConfig, Data) {
        let cfg = ExperimentConfig {
            dataset: DatasetKind::Synthetic,
            synthetic_train: 64,
            synthetic_test: 32,
            batch_size: 16,
            epochs: 2,
            pool,
            ..ExperimentConfig::default()
        };
        let data = load_data(&cfg).unwrap();
        (cfg, data)
    }

    #[test]
    fn rows_per_epoch_and_step_count() {
        let (cfg, data) = tiny(PoolMode::Sorted(4));
        let out = train_run::<Vec<u8>>(&cfg, &data, None).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert_eq!(out.step_losses.len(), 8);
        assert_eq!(out.rows[1].step, 8);
        assert_eq!(out.rows[0].mean_weights.len(), 3);
        for w in &out.rows[1].mean_weights {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn periodic_logging() {
        let (mut cfg, data) = tiny(PoolMode::Max);
        cfg.log_every = 3;
        let out = train_run::<Vec<u8>>(&cfg, &data, None).unwrap();
        let steps: Vec<_> = out.rows.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![3, 4, 6, 8]);
    }

    #[test]
    fn divergence_names_step() {
        let (mut cfg, data) = tiny(PoolMode::Max);
        cfg.learning_rate = 1e300;
        match train_run::<Vec<u8>>(&cfg, &data, None) {
            Err(HarnessError::Diverged { step, .. }) => assert!(step >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
