//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored. Every key is optional; missing
//! keys take the defaults shown by `sortpool print-config`. Unknown keys and
//! unparsable values are rejected with the offending line number.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sortpool::{PoolConfig, PoolMode, WeightInit};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },

    #[error("line {line}: `{key}` expects {expected}, got `{value}`")]
    TypeMismatch {
        key: String,
        value: String,
        expected: &'static str,
        line: usize,
    },

    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { text: String, line: usize },

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    /// Directory holding `train-*` / `t10k-*` IDX files (raw or `.gz`).
    pub data_dir: PathBuf,
    /// Cap on training examples (first `n` of the training file).
    pub subset: Option<usize>,
    /// Cap on test examples.
    pub test_subset: Option<usize>,
    pub synthetic_train: usize,
    pub synthetic_test: usize,
    pub pool: PoolMode,
    pub weight_init: WeightInit,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub pool_learning_rate: Option<f64>,
    pub pool_weight_decay: Option<f64>,
    pub seed: u64,
    pub replicates: usize,
    pub out_dir: PathBuf,
    /// Extra evaluation every this many steps; 0 evaluates at epoch ends only.
    pub log_every: usize,
    pub eval_batch: usize,
    /// Classes used for training; empty means all.
    pub train_classes: Vec<usize>,
    /// Held-out classes for the episodic evaluation.
    pub eval_classes: Vec<usize>,
    pub episodes: usize,
    pub ways: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetKind::Mnist,
            data_dir: PathBuf::from("data/mnist"),
            subset: None,
            test_subset: None,
            synthetic_train: 4000,
            synthetic_test: 500,
            pool: PoolMode::Max,
            weight_init: WeightInit::Uniform,
            epochs: 1,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 0.0,
            pool_learning_rate: None,
            pool_weight_decay: None,
            seed: 1,
            replicates: 5,
            out_dir: PathBuf::from("runs"),
            log_every: 0,
            eval_batch: 500,
            train_classes: Vec::new(),
            eval_classes: Vec::new(),
            episodes: 1000,
            ways: 5,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str, expected: &'static str, line: usize) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::TypeMismatch {
        key: key.into(),
        value: value.into(),
        expected,
        line,
    })
}

fn optional<T: FromStr>(key: &str, value: &str, expected: &'static str, line: usize) -> Result<Option<T>, ConfigError> {
    match value {
        "none" | "all" | "" => Ok(None),
        v => parse(key, v, expected, line).map(Some),
    }
}

fn class_list(key: &str, value: &str, line: usize) -> Result<Vec<usize>, ConfigError> {
    if value.is_empty() || value == "none" || value == "all" {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|c| parse(key, c.trim(), "a comma-separated list of class indices", line))
        .collect()
}

fn join(classes: &[usize]) -> String {
    if classes.is_empty() {
        return "all".into();
    }
    classes.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// `max`, `avg`, `kth:<k>` or `sorted:<K>`.
pub fn parse_pool(value: &str) -> Option<PoolMode> {
    let (name, arg) = value.split_once(':').unwrap_or((value, ""));
    let n = || arg.parse::<usize>().ok();
    match name {
        "max" if arg.is_empty() => Some(PoolMode::Max),
        "avg" if arg.is_empty() => Some(PoolMode::Avg),
        "kth" => n().map(PoolMode::KthMax),
        "sorted" => n().map(PoolMode::Sorted),
        _ => None,
    }
}

pub fn pool_name(mode: PoolMode) -> String {
    match mode {
        PoolMode::Max => "max".into(),
        PoolMode::Avg => "avg".into(),
        PoolMode::KthMax(k) => format!("kth:{k}"),
        PoolMode::Sorted(k) => format!("sorted:{k}"),
    }
}

fn init_name(init: WeightInit) -> String {
    match init {
        WeightInit::Uniform => "uniform".into(),
        WeightInit::ExpDecay(l) => format!("expdecay:{l}"),
    }
}

fn parse_init(value: &str) -> Option<WeightInit> {
    match value.split_once(':') {
        None if value == "uniform" => Some(WeightInit::Uniform),
        Some(("expdecay", l)) => l.parse().ok().map(WeightInit::ExpDecay),
        _ => None,
    }
}

fn opt_text<T: ToString>(v: &Option<T>, none: &str) -> String {
    v.as_ref().map_or_else(|| none.to_string(), T::to_string)
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    text: raw.into(),
                    line: i + 1,
                });
            };
            self.set_at(key.trim(), value.trim(), i + 1)?;
        }
        Ok(())
    }

    /// Applies one `key = value` pair (line 0 marks a command-line override).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        self.set_at(key, value, 0)
    }

    fn set_at(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        let mismatch = |expected| ConfigError::TypeMismatch {
            key: key.into(),
            value: value.into(),
            expected,
            line,
        };
        match key {
            "dataset" => {
                self.dataset = match value {
                    "mnist" => DatasetKind::Mnist,
                    "synthetic" => DatasetKind::Synthetic,
                    _ => return Err(mismatch("`mnist` or `synthetic`")),
                }
            }
            "data_dir" => self.data_dir = PathBuf::from(value),
            "subset" => self.subset = optional(key, value, "an integer or `all`", line)?,
            "test_subset" => self.test_subset = optional(key, value, "an integer or `all`", line)?,
            "synthetic_train" => self.synthetic_train = parse(key, value, "an integer", line)?,
            "synthetic_test" => self.synthetic_test = parse(key, value, "an integer", line)?,
            "pool" => self.pool = parse_pool(value).ok_or_else(|| mismatch("`max`, `avg`, `kth:<k>` or `sorted:<K>`"))?,
            "weight_init" => self.weight_init = parse_init(value).ok_or_else(|| mismatch("`uniform` or `expdecay:<lambda>`"))?,
            "epochs" => self.epochs = parse(key, value, "an integer", line)?,
            "batch_size" => self.batch_size = parse(key, value, "an integer", line)?,
            "learning_rate" => self.learning_rate = parse(key, value, "a number", line)?,
            "momentum" => self.momentum = parse(key, value, "a number", line)?,
            "weight_decay" => self.weight_decay = parse(key, value, "a number", line)?,
            "pool_learning_rate" => self.pool_learning_rate = optional(key, value, "a number or `none`", line)?,
            "pool_weight_decay" => self.pool_weight_decay = optional(key, value, "a number or `none`", line)?,
            "seed" => self.seed = parse(key, value, "an unsigned integer", line)?,
            "replicates" => self.replicates = parse(key, value, "an integer", line)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "log_every" => self.log_every = parse(key, value, "an integer", line)?,
            "eval_batch" => self.eval_batch = parse(key, value, "an integer", line)?,
            "train_classes" => self.train_classes = class_list(key, value, line)?,
            "eval_classes" => self.eval_classes = class_list(key, value, line)?,
            "episodes" => self.episodes = parse(key, value, "an integer", line)?,
            "ways" => self.ways = parse(key, value, "an integer", line)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.into(),
                    line,
                })
            }
        }
        Ok(())
    }

    /// Range and cross-field checks.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("replicates", self.replicates),
            ("eval_batch", self.eval_batch),
            ("synthetic_train", self.synthetic_train),
            ("synthetic_test", self.synthetic_test),
            ("episodes", self.episodes),
            ("ways", self.ways),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be positive")));
            }
        }
        if matches!(self.subset, Some(0)) || matches!(self.test_subset, Some(0)) {
            return Err(ConfigError::Invalid("subset sizes must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || self.pool_learning_rate.is_some_and(|lr| !(lr > 0.0)) {
            return Err(ConfigError::Invalid("learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(ConfigError::Invalid(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.weight_decay < 0.0 || self.pool_weight_decay.is_some_and(|w| w < 0.0) {
            return Err(ConfigError::Invalid("weight decay must be non-negative".into()));
        }
        if let WeightInit::ExpDecay(l) = self.weight_init {
            if !(l > 0.0) {
                return Err(ConfigError::Invalid(format!("exp-decay lambda must be positive, got {l}")));
            }
        }
        PoolConfig::new((3, 3), (2, 2), self.pool).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(&c) = self.train_classes.iter().chain(&self.eval_classes).find(|&&c| c >= 10) {
            return Err(ConfigError::Invalid(format!("class {c} out of range 0..10")));
        }
        if let Some(c) = self.eval_classes.iter().find(|c| self.train_classes.contains(c)) {
            return Err(ConfigError::Invalid(format!("class {c} is in both train_classes and eval_classes")));
        }
        Ok(())
    }

    /// Canonical text form; parsing it reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("write to String");
        kv(
            "dataset",
            match self.dataset {
                DatasetKind::Mnist => "mnist".into(),
                DatasetKind::Synthetic => "synthetic".into(),
            },
        );
        kv("data_dir", self.data_dir.display().to_string());
        kv("subset", opt_text(&self.subset, "all"));
        kv("test_subset", opt_text(&self.test_subset, "all"));
        kv("synthetic_train", self.synthetic_train.to_string());
        kv("synthetic_test", self.synthetic_test.to_string());
        kv("pool", pool_name(self.pool));
        kv("weight_init", init_name(self.weight_init));
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("momentum", self.momentum.to_string());
        kv("weight_decay", self.weight_decay.to_string());
        kv("pool_learning_rate", opt_text(&self.pool_learning_rate, "none"));
        kv("pool_weight_decay", opt_text(&self.pool_weight_decay, "none"));
        kv("seed", self.seed.to_string());
        kv("replicates", self.replicates.to_string());
        kv("out_dir", self.out_dir.display().to_string());
        kv("log_every", self.log_every.to_string());
        kv("eval_batch", self.eval_batch.to_string());
        kv("train_classes", join(&self.train_classes));
        kv("eval_classes", join(&self.eval_classes));
        kv("episodes", self.episodes.to_string());
        kv("ways", self.ways.to_string());
        s
    }
}
