//! Multi-threaded evaluation. Samples are scored on a rayon pool and
//! collected in input order, so the report is identical to the sequential one.

use std::collections::BTreeMap;

use rayon::prelude::*;
use regionrank_core::eval::{
    build_report, evaluate_sample, resolve_query, AblationGrid, Evaluation,
};
use regionrank_core::{
    CorpusIndex, EvalOptions, EvalSample, QueryEmbedding, ScoringConfig, Tokenizer,
};

use crate::error::{Error, Result};

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn evaluate_in(
    idx: &CorpusIndex,
    samples: &[EvalSample],
    queries: &BTreeMap<String, QueryEmbedding>,
    cfg: &ScoringConfig,
    opts: &EvalOptions,
    tokenizer: &(dyn Tokenizer + Sync),
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(regionrank_core::Error::EmptySamples.into());
    }
    cfg.validate()?;
    let outcomes = samples
        .par_iter()
        .map(|s| evaluate_sample(idx, s, resolve_query(queries, s)?, cfg, opts, tokenizer))
        .collect::<regionrank_core::Result<Vec<_>>>()?;
    Ok(Evaluation {
        report: build_report(&outcomes, &opts.thresholds, *cfg, opts.mode),
        outcomes,
    })
}

/// Parallel counterpart of [`regionrank_core::eval::run_evaluation`].
pub fn run_evaluation(
    idx: &CorpusIndex,
    samples: &[EvalSample],
    queries: &BTreeMap<String, QueryEmbedding>,
    cfg: &ScoringConfig,
    opts: &EvalOptions,
    tokenizer: &(dyn Tokenizer + Sync),
    workers: usize,
) -> Result<Evaluation> {
    pool(workers)?.install(|| evaluate_in(idx, samples, queries, cfg, opts, tokenizer))
}

/// Parallel counterpart of [`regionrank_core::eval::run_ablation`].
pub fn run_ablation(
    idx: &CorpusIndex,
    samples: &[EvalSample],
    queries: &BTreeMap<String, QueryEmbedding>,
    grid: &AblationGrid,
    opts: &EvalOptions,
    tokenizer: &(dyn Tokenizer + Sync),
    workers: usize,
) -> Result<Vec<Evaluation>> {
    if grid.is_empty() {
        return Err(Error::Config("empty ablation grid".into()));
    }
    let pool = pool(workers)?;
    pool.install(|| {
        grid.configs()
            .iter()
            .map(|cfg| evaluate_in(idx, samples, queries, cfg, opts, tokenizer))
            .collect()
    })
}
