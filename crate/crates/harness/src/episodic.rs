//! N-way 1-shot episodes scored by nearest cosine neighbour in an embedding.
//!
//! Each episode draws `ways` classes in random order, then one support and one
//! distinct query image per class. A query is classified as the class of the
//! most cosine-similar support; exact ties go to the earliest support.

use sortpool::data::Dataset;
use sortpool::layers::LayerGraph;
use sortpool::rng::SplitMix64;

use crate::config::ExperimentConfig;
use crate::network::embedding_depth;
use crate::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Episode {
    /// One dataset index per way.
    pub support: Vec<usize>,
    /// `queries[i]` shares its class with `support[i]`.
    pub queries: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeStats {
    pub mean: f64,
    pub stderr: f64,
    pub per_episode: Vec<f64>,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl EpisodeStats {
    pub fn from_scores(per_episode: Vec<f64>) -> Self {
        let (mean, stderr) = mean_stderr(&per_episode);
        EpisodeStats {
            mean,
            stderr,
            per_episode,
        }
    }
}

/// Mean and standard error of `a − b` over shared episodes.
pub fn paired_difference(a: &EpisodeStats, b: &EpisodeStats) -> Result<(f64, f64)> {
    if a.per_episode.len() != b.per_episode.len() {
        return Err(HarnessError::Episodic("paired comparison needs the same episodes".into()));
    }
    let d: Vec<f64> = a.per_episode.iter().zip(&b.per_episode).map(|(x, y)| x - y).collect();
    Ok(mean_stderr(&d))
}

pub fn sample_episodes(labels: &[usize], classes: &[usize], ways: usize, count: usize, seed: u64) -> Result<Vec<Episode>> {
    if ways < 2 || classes.len() < ways {
        return Err(HarnessError::Episodic(format!(
            "{ways}-way episodes need at least {ways} classes, have {}",
            classes.len()
        )));
    }
    let pools: Vec<Vec<usize>> = classes
        .iter()
        .map(|&c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
        .collect();
    if let Some(i) = pools.iter().position(|p| p.len() < 2) {
        return Err(HarnessError::Episodic(format!("class {} has fewer than 2 examples", classes[i])));
    }
    let mut rng = SplitMix64::new(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let chosen = rng.permutation(classes.len());
        let mut ep = Episode {
            support: Vec::with_capacity(ways),
            queries: Vec::with_capacity(ways),
        };
        for &c in &chosen[..ways] {
            let pool = &pools[c];
            let a = rng.below(pool.len());
            let mut b = rng.below(pool.len() - 1);
            if b >= a {
                b += 1;
            }
            ep.support.push(pool[a]);
            ep.queries.push(pool[b]);
        }
        out.push(ep);
    }
    Ok(out)
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn score_episodes(embeddings: &[Vec<f64>], episodes: &[Episode]) -> EpisodeStats {
    let scores = episodes
        .iter()
        .map(|ep| {
            let correct = ep
                .queries
                .iter()
                .enumerate()
                .filter(|&(truth, &q)| {
                    let mut best = (0, f64::NEG_INFINITY);
                    for (i, &s) in ep.support.iter().enumerate() {
                        let sim = cosine(&embeddings[q], &embeddings[s]);
                        if sim > best.1 {
                            best = (i, sim);
                        }
                    }
                    best.0 == truth
                })
                .count();
            correct as f64 / ep.queries.len() as f64
        })
        .collect();
    EpisodeStats::from_scores(scores)
}

/// Flatten-layer embedding of every image.
pub fn embed(graph: &LayerGraph, data: &Dataset, chunk: usize) -> Result<Vec<Vec<f64>>> {
    let depth = embedding_depth(graph);
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for part in idx.chunks(chunk.max(1)) {
        let (x, _) = data.gather(part)?;
        let e = graph.infer_prefix(&x, depth)?;
        let width = e.len() / part.len();
        out.extend(e.data().chunks_exact(width).map(<[f64]>::to_vec));
    }
    Ok(out)
}

/// Episodes for `cfg` over the held-out split, seeded by `cfg.seed`.
pub fn episodes_for(cfg: &ExperimentConfig, eval: &Dataset) -> Result<Vec<Episode>> {
    cfg.validate()?;
    if cfg.eval_classes.is_empty() {
        return Err(HarnessError::Episodic("eval_classes is empty".into()));
    }
    sample_episodes(&eval.labels, &cfg.eval_classes, cfg.ways, cfg.episodes, cfg.seed)
}

pub fn episodic_eval(graph: &LayerGraph, cfg: &ExperimentConfig, eval: &Dataset) -> Result<EpisodeStats> {
    let episodes = episodes_for(cfg, eval)?;
    Ok(score_episodes(&embed(graph, eval, cfg.eval_batch)?, &episodes))
}
