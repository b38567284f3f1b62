//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 4–7 train on MNIST, read from `SORTPOOL_MNIST_DIR` (default
//! `<workspace>/data/mnist`). `ACCEPTANCE_ONLY=1,2,3` runs a subset.
//! Failed criteria are reported, not hidden; the process exits nonzero on a
//! failed criterion only with `ACCEPTANCE_STRICT=1`, and always on an error.

use std::cell::OnceCell;
use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::Instant;

use sortpool::data::{batches, encode_idx_images, encode_idx_labels, load_idx, synthetic_dataset, BatchPlan};
use sortpool::pooling::{avg_pool, kth_max_forward, max_pool, sorted_pool_forward};
use sortpool::rng::SplitMix64;
use sortpool::{Error, PoolConfig, PoolMode, SortedPoolParams, Tensor};
use sortpool_harness::config::{DatasetKind, ExperimentConfig};
use sortpool_harness::episodic::{embed, episodes_for, paired_difference, score_episodes};
use sortpool_harness::gradchecks::{network_checks, operator_checks};
use sortpool_harness::train::{load_data, load_eval_split, train_run, Data, RunOutput};

type Outcome = Result<(bool, String), String>;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const SUBSET: usize = 10_000;

fn workspace() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn mnist_dir() -> PathBuf {
    std::env::var_os("SORTPOOL_MNIST_DIR").map_or_else(|| workspace().join("data/mnist"), PathBuf::from)
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- 1

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut results = operator_checks(2024).map_err(err)?;
    for mode in [PoolMode::Max, PoolMode::KthMax(2), PoolMode::Sorted(4)] {
        results.extend(network_checks(mode, 2024).map_err(err)?);
    }
    let secs = start.elapsed().as_secs_f64();
    let failed: Vec<_> = results.iter().filter(|r| !r.passed()).map(|r| r.name.clone()).collect();
    let worst = |tol: f64| {
        results
            .iter()
            .filter(|r| r.tolerance == tol)
            .map(|r| r.report.max_relative_error)
            .fold(0.0, f64::max)
    };
    Ok((
        failed.is_empty() && secs < 120.0,
        format!(
            "{} checks, worst operator {:.2e} (<1e-5), worst network {:.2e} (<1e-4), {secs:.0}s (<120s){}",
            results.len(),
            worst(1e-5),
            worst(1e-4),
            if failed.is_empty() { String::new() } else { format!("; failed: {failed:?}") }
        ),
    ))
}

// ---------------------------------------------------------------- 2

fn reductions() -> Outcome {
    let mut rng = SplitMix64::new(77);
    let n = 1000;
    let x = Tensor::from_values(&[n, 1, 3, 3], (0..n * 9).map(|_| rng.uniform(-1.0, 1.0)).collect()).map_err(err)?;
    let one = SortedPoolParams::new(Tensor::from_values(&[1, 1], vec![rng.uniform(-3.0, 3.0)]).map_err(err)?).map_err(err)?;
    let s1 = sorted_pool_forward(&x, &one, &PoolConfig::new((3, 3), (3, 3), PoolMode::Sorted(1)).map_err(err)?)
        .map_err(err)?
        .0;
    let mx = max_pool(&x, (3, 3), (3, 3)).map_err(err)?.0;
    let max_exact = s1.data().iter().zip(mx.data()).all(|(a, b)| a.to_bits() == b.to_bits());

    let zero = SortedPoolParams::new(Tensor::zeros(&[1, 9]).map_err(err)?).map_err(err)?;
    let s9 = sorted_pool_forward(&x, &zero, &PoolConfig::new((3, 3), (3, 3), PoolMode::Sorted(9)).map_err(err)?)
        .map_err(err)?
        .0;
    let av = avg_pool(&x, (3, 3), (3, 3)).map_err(err)?.0;
    let dev = s9.data().iter().zip(av.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok((
        max_exact && dev <= 1e-12,
        format!("{n} windows: sorted(K=1) == max bitwise: {max_exact}; |sorted(K=9, w*=0) - avg| max {dev:.1e} (<=1e-12)"),
    ))
}

// ---------------------------------------------------------------- 3

fn order_statistics() -> Outcome {
    let mut rng = SplitMix64::new(33);
    let mut mismatches = 0;
    let mut compared = 0;
    for t in 0..500 {
        let (h, w) = (3 + rng.below(6), 3 + rng.below(6));
        let c = 1 + rng.below(3);
        // Every fifth tensor is drawn from a coarse grid so windows contain ties.
        let coarse = t % 5 == 0;
        let vals: Vec<f64> = (0..c * h * w)
            .map(|_| {
                let v = rng.uniform(-1.0, 1.0);
                if coarse {
                    // `+ 0.0` folds -0.0 into +0.0 so ties are exact bit-for-bit.
                    (v * 3.0).round() / 3.0 + 0.0
                } else {
                    v
                }
            })
            .collect();
        let x = Tensor::from_values(&[1, c, h, w], vals).map_err(err)?;
        let stride = 1 + rng.below(2);
        for k in 1..=9 {
            let cfg = PoolConfig::new((3, 3), (stride, stride), PoolMode::KthMax(k)).map_err(err)?;
            let y = kth_max_forward(&x, &cfg).map_err(err)?.0;
            for (win, &got) in x.window_iter((3, 3), (stride, stride)).map_err(err)?.zip(y.data()) {
                let mut sorted = win.values.clone();
                sorted.sort_by(|a, b| b.total_cmp(a));
                compared += 1;
                if sorted[k - 1].to_bits() != got.to_bits() {
                    mismatches += 1;
                }
            }
        }
    }
    Ok((
        mismatches == 0,
        format!("500 tensors, k = 1..9, {compared} windows vs full-sort oracle, {mismatches} mismatches"),
    ))
}

// ---------------------------------------------------------------- 4–6 (shared runs)

struct MnistRuns {
    max: Vec<RunOutput>,
    kth4: Vec<RunOutput>,
    sorted4: Vec<RunOutput>,
    secs_kth: f64,
    secs_sorted: f64,
}

fn mnist_cfg(pool: PoolMode, seed: u64, epochs: usize) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetKind::Mnist,
        data_dir: mnist_dir(),
        subset: Some(SUBSET),
        pool,
        seed,
        epochs,
        ..ExperimentConfig::default()
    }
}

fn mnist_runs(cache: &OnceCell<Result<MnistRuns, String>>) -> Result<&MnistRuns, String> {
    cache
        .get_or_init(|| {
            let data: Data = load_data(&mnist_cfg(PoolMode::Max, 1, 1))
                .map_err(|e| format!("MNIST not available under {}: {e}", mnist_dir().display()))?;
            let train = |pool, epochs| -> Result<(Vec<RunOutput>, f64), String> {
                let start = Instant::now();
                let runs = SEEDS
                    .iter()
                    .map(|&s| train_run::<Vec<u8>>(&mnist_cfg(pool, s, epochs), &data, None).map_err(err))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((runs, start.elapsed().as_secs_f64()))
            };
            // 10-epoch max runs serve as the k=1 baseline too: epoch 1 and 3
            // rows do not depend on how many epochs follow.
            let (max, secs_max) = train(PoolMode::Max, 10)?;
            let (kth4, secs_k4) = train(PoolMode::KthMax(4), 3)?;
            let (sorted4, secs_s4) = train(PoolMode::Sorted(4), 10)?;
            Ok(MnistRuns {
                max,
                kth4,
                sorted4,
                secs_kth: secs_k4 + secs_max * 0.3,
                secs_sorted: secs_s4 + secs_max,
            })
        })
        .as_ref()
        .map_err(Clone::clone)
}

fn errs(runs: &[RunOutput], epoch: usize) -> Vec<f64> {
    runs.iter().map(|r| r.test_err_at_epoch(epoch).unwrap_or(f64::NAN)).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|e| format!("{e:.2}")).collect::<Vec<_>>().join("/")
}

/// Shared trend protocol for criteria 4 and 5.
fn trend(base: &[RunOutput], variant: &[RunOutput], base_name: &str, name: &str) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for epoch in [1, 3] {
        let (b, v) = (errs(base, epoch), errs(variant, epoch));
        let wins = b.iter().zip(&v).filter(|(b, v)| v < b).count();
        let (mb, mv) = (mean(&b), mean(&v));
        ok &= mv < mb && wins >= 4;
        parts.push(format!(
            "epoch {epoch}: {base_name} {mb:.2}% [{}] vs {name} {mv:.2}% [{}], {name} lower in {wins}/5",
            fmt(&b),
            fmt(&v)
        ));
        if epoch == 1 {
            let rel = (mb - mv) / mb;
            ok &= rel >= 0.15;
            parts.push(format!("epoch-1 relative reduction {:+.1}% (need >= +15%)", 100.0 * rel));
        }
    }
    (ok, parts.join("; "))
}

fn convergence_k(cache: &OnceCell<Result<MnistRuns, String>>) -> Outcome {
    let r = mnist_runs(cache)?;
    let (ok, msg) = trend(&r.max, &r.kth4, "k=1", "k=4");
    Ok((ok, format!("{msg}; ~{:.0} min", r.secs_kth / 60.0)))
}

fn sorted_vs_max(cache: &OnceCell<Result<MnistRuns, String>>) -> Outcome {
    let r = mnist_runs(cache)?;
    let (mut ok, msg) = trend(&r.max, &r.sorted4, "max", "sorted:4");
    let (m10, s10) = (mean(&errs(&r.max, 10)), mean(&errs(&r.sorted4, 10)));
    ok &= s10 - m10 <= 1.0;
    Ok((
        ok,
        format!(
            "{msg}; epoch 10: max {m10:.2}% vs sorted:4 {s10:.2}% (gap {:+.2} pp, need <= +1); ~{:.0} min",
            s10 - m10,
            r.secs_sorted / 60.0
        ),
    ))
}

fn weight_non_collapse(cache: &OnceCell<Result<MnistRuns, String>>) -> Outcome {
    let r = mnist_runs(cache)?;
    let mut worst_sum: f64 = 0.0;
    let mut all_positive = true;
    let mut spread = Vec::new();
    let mut every_seed = true;
    for run in &r.sorted4 {
        for row in &run.rows {
            for w in &row.mean_weights {
                worst_sum = worst_sum.max((w.iter().sum::<f64>() - 1.0).abs());
                all_positive &= w.iter().all(|&v| v > 0.0);
            }
        }
        let last = &run.rows.last().ok_or("no rows logged")?.mean_weights;
        let best = last.iter().map(|w| w[1]).fold(f64::NEG_INFINITY, f64::max);
        every_seed &= best > 0.05;
        spread.push(last.iter().map(|w| fmt(&w.iter().map(|v| v * 100.0).collect::<Vec<_>>())).collect::<Vec<_>>().join(" | "));
    }
    Ok((
        every_seed && worst_sum <= 1e-9 && all_positive,
        format!(
            "max layer W2 > 0.05 in every seed: {every_seed}; max |sum W - 1| {worst_sum:.1e}; final W (%), seed 1: {}",
            spread[0]
        ),
    ))
}

// ---------------------------------------------------------------- 7

fn one_shot() -> Outcome {
    let base = ExperimentConfig {
        dataset: DatasetKind::Mnist,
        data_dir: mnist_dir(),
        subset: Some(SUBSET),
        epochs: 3,
        seed: 1,
        train_classes: vec![0, 1, 2, 3, 4],
        eval_classes: vec![5, 6, 7, 8, 9],
        episodes: 1000,
        ways: 5,
        ..ExperimentConfig::default()
    };
    let data = load_data(&base).map_err(|e| format!("MNIST not available under {}: {e}", mnist_dir().display()))?;
    let eval = load_eval_split(&base).map_err(err)?;
    let episodes = episodes_for(&base, &eval).map_err(err)?;
    let mut stats = Vec::new();
    for pool in [PoolMode::Max, PoolMode::Sorted(4)] {
        let cfg = ExperimentConfig { pool, ..base.clone() };
        let run = train_run::<Vec<u8>>(&cfg, &data, None).map_err(err)?;
        stats.push(score_episodes(&embed(&run.graph, &eval, cfg.eval_batch).map_err(err)?, &episodes));
    }
    let (d, se) = paired_difference(&stats[1], &stats[0]).map_err(err)?;
    let z = |s: &sortpool_harness::episodic::EpisodeStats| (s.mean - 0.2) / s.stderr;
    Ok((
        z(&stats[0]) > 10.0 && z(&stats[1]) > 10.0,
        format!(
            "{} episodes, held-out 5-9: max {:.3} ± {:.3} ({:.0} SE above chance), sorted:4 {:.3} ± {:.3} ({:.0} SE); sorted - max = {d:+.4} ± {se:.4} (recorded, not asserted)",
            episodes.len(),
            stats[0].mean,
            stats[0].stderr,
            z(&stats[0]),
            stats[1].mean,
            stats[1].stderr,
            z(&stats[1])
        ),
    ))
}

// ---------------------------------------------------------------- 8

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_sortpool"))
            .args(["train", "--dataset", "synthetic", "--pool", "sorted:4", "--seed", "7", "--epochs", "2"])
            .args(["--set", "synthetic_train=600", "--set", "synthetic_test=200", "--set", "log_every=5"])
            .arg("--out-dir")
            .arg(&out_dir)
            .output()
            .map_err(err)?;
        if !status.status.success() {
            return Err(format!("train failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        outputs.push(std::fs::read(out_dir.join("metrics.csv")).map_err(err)?);
    }
    let rows = outputs[0].iter().filter(|&&b| b == b'\n').count();
    Ok((
        outputs[0] == outputs[1],
        format!("two `sortpool train` runs, seed 7: {} bytes / {rows} lines each, identical: {}", outputs[0].len(), outputs[0] == outputs[1]),
    ))
}

// ---------------------------------------------------------------- 9

fn data_integrity() -> Outcome {
    let fixtures = workspace().join("crates/core/tests/fixtures");
    let (img, lbl) = (fixtures.join("tiny-images-idx3-ubyte"), fixtures.join("tiny-labels-idx1-ubyte"));
    let d = load_idx(&img, &lbl).map_err(err)?;
    let pixels: Vec<u8> = d.images.data().iter().map(|&p| (p * 255.0).round() as u8).collect();
    let labels: Vec<u8> = d.labels.iter().map(|&l| l as u8).collect();
    let round_trip = encode_idx_images(28, 28, &pixels) == std::fs::read(&img).map_err(err)?
        && encode_idx_labels(&labels) == std::fs::read(&lbl).map_err(err)?;

    let magics = matches!(load_idx(&lbl, &lbl), Err(Error::BadMagic { expected: 2051, found: 2049, .. }))
        && matches!(load_idx(&img, &img), Err(Error::BadMagic { expected: 2049, found: 2051, .. }));

    let s = synthetic_dataset(5, 997, 10).map_err(err)?;
    let key = |x: &[f64]| x.iter().map(|v| v.to_bits()).collect::<Vec<u64>>();
    let mut want: Vec<_> = (0..s.len())
        .map(|i| (s.labels[i], key(&s.images.data()[i * 784..(i + 1) * 784])))
        .collect();
    want.sort();
    let plan = BatchPlan::new(11, 64).map_err(err)?;
    let mut multiset = true;
    for epoch in 0..3 {
        let mut got = Vec::new();
        for (x, y) in batches(&s, &plan, epoch).map_err(err)? {
            got.extend(y.iter().enumerate().map(|(j, &l)| (l, key(&x.data()[j * 784..(j + 1) * 784]))));
        }
        got.sort();
        multiset &= got == want;
    }
    Ok((
        round_trip && magics && multiset,
        format!("fixture round-trip: {round_trip}; magics 2051/2049 enforced: {magics}; 3 epochs of batches preserve the multiset: {multiset}"),
    ))
}

fn main() -> ExitCode {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|p| p.trim().parse().ok()).collect());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let selected = |n: usize| only.as_ref().is_none_or(|o| o.contains(&n));

    let cache = OnceCell::new();
    let criteria: Vec<(usize, &str, Box<dyn FnMut() -> Outcome>)> = vec![
        (1, "gradient exactness", Box::new(gradients)),
        (2, "degenerate reductions", Box::new(reductions)),
        (3, "order-statistic oracle", Box::new(order_statistics)),
        (4, "convergence trend k=4 vs k=1", Box::new(|| convergence_k(&cache))),
        (5, "sorted:4 vs max trend", Box::new(|| sorted_vs_max(&cache))),
        (6, "weight non-collapse", Box::new(|| weight_non_collapse(&cache))),
        (7, "one-shot direction", Box::new(one_shot)),
        (8, "determinism", Box::new(determinism)),
        (9, "data integrity", Box::new(data_integrity)),
    ];
    let mut passed = 0;
    let mut failed = 0;
    let mut errored = 0;
    let mut criteria = criteria;
    for (n, name, f) in criteria.iter_mut() {
        if !selected(*n) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok((true, msg)) => {
                passed += 1;
                println!("criterion {n} PASS  {name}: {msg} [{secs:.0}s]");
            }
            Ok((false, msg)) => {
                failed += 1;
                println!("criterion {n} FAIL  {name}: {msg} [{secs:.0}s]");
            }
            Err(e) => {
                errored += 1;
                println!("criterion {n} FAIL  {name}: error: {e} [{secs:.0}s]");
            }
        }
    }
    println!("acceptance: {passed} passed, {failed} failed, {errored} errored");
    if errored > 0 || (strict && failed > 0) {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
