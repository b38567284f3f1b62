use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sortpool::PoolMode;
use sortpool_harness::config::{parse_pool, pool_name, ConfigError, ExperimentConfig};
use sortpool_harness::episodic::{embed, episodes_for, paired_difference, score_episodes};
use sortpool_harness::gradchecks::{network_checks, operator_checks};
use sortpool_harness::metrics::MetricsWriter;
use sortpool_harness::sweep::{summary, sweep_to_dir};
use sortpool_harness::train::{load_data, load_eval_split, train_run, weight_layout};
use sortpool_harness::{checkpoint, HarnessError, Result};

#[derive(Parser)]
#[command(name = "sortpool", version, about = "Kth-max and sorted pooling experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Cap on training examples.
    #[arg(long, global = true)]
    subset: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// max | avg | kth:<k> | sorted:<K>
    #[arg(long, global = true)]
    pool: Option<String>,
    /// mnist | synthetic
    #[arg(long, global = true)]
    dataset: Option<String>,
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Any config key, e.g. `--set learning_rate=0.05`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network; writes metrics.csv and checkpoint.bin.
    Train,
    /// Compare kth-max pooling ranks over paired seeds.
    SweepK {
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        ks: Vec<usize>,
    },
    /// Compare max pooling against sorted pooling over paired seeds.
    CompareSorted {
        #[arg(long, default_value_t = 4)]
        k: usize,
    },
    /// 1-shot episodic accuracy of a checkpoint's embedding on eval_classes.
    Episodic {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Second checkpoint for a paired comparison over the same episodes.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Pooling mode the baseline checkpoint was trained with.
        #[arg(long, default_value = "max")]
        baseline_pool: String,
    },
    /// Finite-difference checks of every backward pass.
    Gradcheck {
        /// Skip the end-to-end network checks.
        #[arg(long)]
        quick: bool,
    },
    /// Print the effective configuration.
    PrintConfig,
}

fn resolve(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    let direct = [
        ("seed", common.seed.map(|v| v.to_string())),
        ("out_dir", common.out_dir.as_ref().map(|p| p.display().to_string())),
        ("subset", common.subset.map(|v| v.to_string())),
        ("epochs", common.epochs.map(|v| v.to_string())),
        ("pool", common.pool.clone()),
        ("dataset", common.dataset.clone()),
        ("data_dir", common.data_dir.as_ref().map(|p| p.display().to_string())),
    ];
    for (key, value) in direct {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    for kv in &common.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| ConfigError::Syntax {
            text: kv.clone(),
            line: 0,
        })?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn train(cfg: &ExperimentConfig) -> Result<()> {
    let data = load_data(cfg)?;
    let input = data.train.image_size();
    create_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join("metrics.csv");
    let file = std::fs::File::create(&path).map_err(|source| HarnessError::Io { path, source })?;
    let mut writer = MetricsWriter::new(file, weight_layout(cfg, input)?)?;
    let out = train_run(cfg, &data, Some(&mut writer))?;
    for r in &out.rows {
        println!(
            "epoch {:>3} step {:>6}  loss {:.4}  train err {:6.2}%  test err {:6.2}%",
            r.epoch, r.step, r.train_loss, r.train_err_pct, r.test_err_pct
        );
    }
    let ckpt = cfg.out_dir.join("checkpoint.bin");
    checkpoint::save(&ckpt, &out.graph, cfg, input)?;
    println!("wrote {} and {}", cfg.out_dir.join("metrics.csv").display(), ckpt.display());
    Ok(())
}

fn sweep(cfg: &ExperimentConfig, variants: &[PoolMode]) -> Result<()> {
    let s = sweep_to_dir(cfg, variants, &cfg.out_dir)?;
    print!("{}", summary(&s));
    println!("wrote {}", cfg.out_dir.join("comparison.csv").display());
    Ok(())
}

fn episodic(cfg: &ExperimentConfig, ckpt: &Path, baseline: Option<(&Path, PoolMode)>) -> Result<()> {
    let eval = load_eval_split(cfg)?;
    let input = eval.image_size();
    let episodes = episodes_for(cfg, &eval)?;
    let graph = checkpoint::load(ckpt, cfg, input)?;
    let main = score_episodes(&embed(&graph, &eval, cfg.eval_batch)?, &episodes);
    println!(
        "{} {}-way 1-shot: {:.4} ± {:.4} over {} episodes",
        pool_name(cfg.pool),
        cfg.ways,
        main.mean,
        main.stderr,
        episodes.len()
    );
    if let Some((path, pool)) = baseline {
        let bcfg = ExperimentConfig { pool, ..cfg.clone() };
        let graph = checkpoint::load(path, &bcfg, input)?;
        let base = score_episodes(&embed(&graph, &eval, cfg.eval_batch)?, &episodes);
        let (d, se) = paired_difference(&main, &base)?;
        println!("{} {}-way 1-shot: {:.4} ± {:.4}", pool_name(pool), cfg.ways, base.mean, base.stderr);
        println!("paired difference: {d:+.4} ± {se:.4}");
    }
    Ok(())
}

fn gradcheck(cfg: &ExperimentConfig, quick: bool) -> Result<bool> {
    let mut results = operator_checks(cfg.seed)?;
    if !quick {
        for mode in [PoolMode::Max, PoolMode::KthMax(2), PoolMode::Sorted(4)] {
            results.extend(network_checks(mode, cfg.seed)?);
        }
    }
    let mut ok = true;
    for r in &results {
        ok &= r.passed();
        println!(
            "{} {:<40} max rel err {:.3e} (tol {:.0e}) worst a={:.6e} n={:.6e}",
            if r.passed() { "PASS" } else { "FAIL" },
            r.name,
            r.report.max_relative_error,
            r.tolerance,
            r.report.analytic,
            r.report.numeric
        );
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = resolve(&cli.common)?;
    match cli.command {
        Command::Train => train(&cfg)?,
        Command::SweepK { ks } => {
            let variants: Vec<PoolMode> = ks.into_iter().map(PoolMode::KthMax).collect();
            sweep(&cfg, &variants)?
        }
        Command::CompareSorted { k } => sweep(&cfg, &[PoolMode::Max, PoolMode::Sorted(k)])?,
        Command::Episodic {
            checkpoint,
            baseline,
            baseline_pool,
        } => {
            let pool = parse_pool(&baseline_pool).ok_or_else(|| ConfigError::TypeMismatch {
                key: "baseline_pool".into(),
                value: baseline_pool.clone(),
                expected: "max | avg | kth:<k> | sorted:<K>",
                line: 0,
            })?;
            episodic(&cfg, &checkpoint, baseline.as_deref().map(|p| (p, pool)))?
        }
        Command::Gradcheck { quick } => return gradcheck(&cfg, quick),
        Command::PrintConfig => print!("{}", cfg.to_text()),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
