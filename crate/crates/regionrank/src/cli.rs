//! Command-line interface.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use regionrank_core::eval::{
    image_tokens, text_tokens, token_savings, AblationGrid, ByteHeuristicTokenizer,
};
use regionrank_core::geometry::scale_bbox;
use regionrank_core::index::retrieve;
use regionrank_core::scoring::{patch_scores, rank_regions_from_similarity, similarity_matrix};
use regionrank_core::{
    EvalMode, EvalOptions, PatchGrid, QueryEmbedding, RegionStrategy, TokenAggregation,
};
use serde_json::json;

use crate::config::{ConfigLayer, RunConfig};
use crate::emb::load_query_embeddings;
use crate::error::{Error, Result};
use crate::records::{load_regions, write_jsonl};
use crate::store::{build_index, load_index, LoadedIndex};
use crate::synth::{SynthSpec, SyntheticCorpus};
use crate::{heatmap, parallel, report};

#[derive(Debug, Parser)]
#[command(
    name = "regionrank",
    version,
    about = "Region-level document retrieval over OCR boxes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an index directory from page embeddings and OCR regions.
    Index(IndexArgs),
    /// Retrieve and rank regions for a query.
    Query(QueryArgs),
    /// Evaluate localization on a sample file.
    Eval(EvalArgs),
    /// Evaluate a grid of scoring configurations.
    Ablate(AblateArgs),
    /// Export a page's patch-score grid for a query.
    Heatmap(HeatmapArgs),
    /// Token accounting: image and text token totals, savings.
    Tokens(TokensArgs),
    /// Write a seeded synthetic corpus with planted answers.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Directory of page `.emb` files.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// OCR regions file (JSON lines).
    #[arg(long)]
    pub regions: PathBuf,
    /// Output index directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Model input resolution I in pixels.
    #[arg(long, default_value_t = 448)]
    pub input_side: u32,
}

/// Settings shared by scoring commands. Unset flags fall back to the config
/// file, then to built-in defaults.
#[derive(Debug, Args, Default)]
pub struct RunFlags {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Token aggregation: max, mean or sum.
    #[arg(long)]
    pub token_agg: Option<TokenAggregation>,
    /// Region scoring: max, mean or iou_weighted.
    #[arg(long)]
    pub strategy: Option<RegionStrategy>,
    /// Selection percentile in [0, 100].
    #[arg(long)]
    pub percentile: Option<f64>,
    /// Minimum fraction of a patch's area inside a region.
    #[arg(long)]
    pub min_overlap: Option<f64>,
    /// Stage-1 candidate count K.
    #[arg(short = 'k', long)]
    pub candidates: Option<usize>,
    /// Pages returned after Stage 2.
    #[arg(long)]
    pub top_pages: Option<usize>,
    /// Hit-rate thresholds, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    /// Evaluation mode: localization or retrieval.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<EvalMode>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub workers: Option<usize>,
}

fn parse_mode(s: &str) -> std::result::Result<EvalMode, String> {
    match s {
        "localization" => Ok(EvalMode::Localization),
        "retrieval" => Ok(EvalMode::Retrieval),
        other => Err(format!(
            "unknown mode {other:?} (expected localization or retrieval)"
        )),
    }
}

impl RunFlags {
    fn resolve(&self, paths: ConfigLayer) -> Result<RunConfig> {
        let flags = ConfigLayer {
            token_agg: self.token_agg,
            strategy: self.strategy,
            percentile: self.percentile,
            min_overlap: self.min_overlap,
            candidates: self.candidates,
            top_pages: self.top_pages,
            thresholds: self.thresholds.clone(),
            mode: self.mode,
            workers: self.workers,
            ..paths
        };
        let file = match &self.config {
            Some(p) => ConfigLayer::from_file(p)?,
            None => ConfigLayer::default(),
        };
        RunConfig::resolve(flags.over(file))
    }
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Query `.emb` file (or directory of them).
    #[arg(long)]
    pub query: PathBuf,
    /// Which query to run when the file holds several.
    #[arg(long)]
    pub query_id: Option<String>,
    /// Directory for `results.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Query `.emb` file or directory.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [25.0, 75.0])]
    pub percentiles: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values = ["max", "iou_weighted"])]
    pub strategies: Vec<RegionStrategy>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.25, 0.5])]
    pub min_overlaps: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values = ["max"])]
    pub token_aggs: Vec<TokenAggregation>,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long)]
    pub query_id: Option<String>,
    #[arg(long)]
    pub page: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write scored region boxes as `heatmap_regions.jsonl`.
    #[arg(long)]
    pub regions: bool,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Args)]
pub struct TokensArgs {
    /// Regions file: report per-page image tokens and all-region text tokens.
    #[arg(long)]
    pub regions: Option<PathBuf>,
    /// Image tokens for a single width x height.
    #[arg(long, num_args = 2, value_names = ["W", "H"])]
    pub image: Option<Vec<f64>>,
    /// Method token total for a savings computation.
    #[arg(long, requires = "baseline")]
    pub method: Option<u64>,
    /// Baseline token total for a savings computation.
    #[arg(long, requires = "method")]
    pub baseline: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 12)]
    pub pages: usize,
    /// Pages carrying a planted answer; one query and sample each.
    #[arg(long, default_value_t = 3)]
    pub planted: usize,
    #[arg(long, default_value_t = 32)]
    pub grid_side: u32,
    #[arg(long, default_value_t = 448)]
    pub input_side: u32,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Index(a) => cmd_index(&a),
        Command::Query(a) => cmd_query(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Ablate(a) => cmd_ablate(&a),
        Command::Heatmap(a) => cmd_heatmap(&a),
        Command::Tokens(a) => cmd_tokens(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

fn required(p: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    p.clone()
        .ok_or_else(|| Error::Config(format!("missing --{what} (flag or config file)")))
}

/// Output directories must not live inside the index.
fn check_output(out: &Path, index: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let o = fs::canonicalize(out).map_err(|e| Error::io(out, e))?;
    let i = fs::canonicalize(index).map_err(|e| Error::io(index, e))?;
    if o.starts_with(&i) {
        return Err(Error::Config(format!(
            "output {} is inside the index directory",
            out.display()
        )));
    }
    Ok(())
}

fn write_effective_config(out: &Path, cfg: &RunConfig) -> Result<()> {
    let p = out.join("effective_config.json");
    let text = serde_json::to_string_pretty(&cfg.to_json()).expect("json");
    fs::write(&p, text).map_err(|e| Error::io(&p, e))
}

fn open_index(path: &Path) -> Result<LoadedIndex> {
    let loaded = load_index(path)?;
    if !loaded.missing_pages.is_empty() {
        eprintln!(
            "warning: {} page(s) listed in the manifest have no embedding file",
            loaded.missing_pages.len()
        );
    }
    Ok(loaded)
}

fn pick_query(path: &Path, id: Option<&str>) -> Result<QueryEmbedding> {
    let mut loaded = load_query_embeddings(path)?.queries;
    match id {
        Some(id) => loaded
            .remove(id)
            .ok_or_else(|| Error::Config(format!("query {id:?} not found in {}", path.display()))),
        None if loaded.len() == 1 => Ok(loaded.into_values().next().unwrap()),
        None => Err(Error::Config(format!(
            "{} holds {} queries; pick one with --query-id",
            path.display(),
            loaded.len()
        ))),
    }
}

pub fn cmd_index(a: &IndexArgs) -> Result<()> {
    let s = build_index(&a.embeddings, &a.regions, &a.out, a.input_side)?;
    let m = &s.manifest;
    println!(
        "indexed N={} pages, G={}, I={}, d={}, regions={}",
        m.pages, m.grid_side, m.input_side, m.dim, m.regions
    );
    for id in &s.orphan_region_pages {
        eprintln!("warning: regions reference unknown page {id:?}; skipped");
    }
    for id in &s.pages_without_regions {
        eprintln!("warning: page {id:?} has no OCR record; indexed without regions");
    }
    for w in &s.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

pub fn cmd_query(a: &QueryArgs) -> Result<()> {
    let cfg = a.run.resolve(ConfigLayer {
        index: a.index.clone(),
        output: a.out.clone(),
        ..Default::default()
    })?;
    let index_dir = required(&cfg.index, "index")?;
    if let Some(out) = &cfg.output {
        check_output(out, &index_dir)?;
    }
    let loaded = open_index(&index_dir)?;
    let q = pick_query(&a.query, a.query_id.as_deref())?;
    let k = cfg.candidates.min(loaded.index.len()).max(1);
    let top = cfg.top_pages.min(k);
    let r = retrieve(&q, &loaded.index, k, &cfg.scoring, top)?;

    let results: Vec<serde_json::Value> = r
        .results
        .iter()
        .map(|res| {
            let rec = loaded
                .index
                .record(&res.page_id)
                .expect("indexed page has a record");
            let regions: Vec<serde_json::Value> = res
                .regions
                .iter()
                .map(|s| {
                    let reg = &rec.regions[s.region_index];
                    json!({
                        "rank": s.rank,
                        "region_id": s.region_id,
                        "score": s.score,
                        "selected": s.selected,
                        "coverage_count": s.coverage_count,
                        "bbox": reg.bbox.to_array(),
                        "text": reg.text,
                    })
                })
                .collect();
            json!({
                "page_id": res.page_id,
                "page_score": res.page_score,
                "stage1_rank": res.stage1_rank,
                "regions": regions,
                "uncovered": res.uncovered,
            })
        })
        .collect();
    let doc = json!({
        "config": cfg.to_json(),
        "query_id": q.id(),
        "results": results,
        "skipped": r.skipped,
    });

    for res in &r.results {
        println!(
            "page {} score={:.4} stage1_rank={}",
            res.page_id, res.page_score, res.stage1_rank
        );
        let rec = loaded.index.record(&res.page_id).expect("record");
        for s in &res.regions {
            let reg = &rec.regions[s.region_index];
            let b = reg.bbox;
            println!(
                "  {:>3} {} {:<12} score={:.4} bbox=[{:.0},{:.0},{:.0},{:.0}] {}",
                s.rank,
                if s.selected { "*" } else { " " },
                s.region_id,
                s.score,
                b.x1,
                b.y1,
                b.x2,
                b.y2,
                reg.text.chars().take(60).collect::<String>()
            );
        }
    }
    for id in &r.skipped {
        eprintln!("warning: candidate page {id:?} skipped (no patch embeddings)");
    }
    if let Some(out) = &cfg.output {
        let p = out.join("results.json");
        fs::write(&p, serde_json::to_string_pretty(&doc).expect("json"))
            .map_err(|e| Error::io(&p, e))?;
        write_effective_config(out, &cfg)?;
    }
    Ok(())
}

struct EvalInputs {
    cfg: RunConfig,
    index_dir: PathBuf,
    out: PathBuf,
    loaded: LoadedIndex,
    samples: Vec<regionrank_core::EvalSample>,
    queries: std::collections::BTreeMap<String, QueryEmbedding>,
}

fn eval_inputs(a: &EvalArgs) -> Result<EvalInputs> {
    let cfg = a.run.resolve(ConfigLayer {
        index: a.index.clone(),
        samples: a.samples.clone(),
        queries: a.queries.clone(),
        output: a.out.clone(),
        ..Default::default()
    })?;
    let index_dir = required(&cfg.index, "index")?;
    let out = required(&cfg.output, "out")?;
    let loaded = open_index(&index_dir)?;
    let samples = crate::records::load_eval_samples(&required(&cfg.samples, "samples")?)?;
    let queries = load_query_embeddings(&required(&cfg.queries, "queries")?)?.queries;
    check_output(&out, &index_dir)?;
    Ok(EvalInputs {
        cfg,
        index_dir,
        out,
        loaded,
        samples,
        queries,
    })
}

fn eval_options(cfg: &RunConfig) -> EvalOptions {
    EvalOptions {
        mode: cfg.mode,
        thresholds: cfg.thresholds.clone(),
        candidates: cfg.candidates,
    }
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let inp = eval_inputs(a)?;
    let eval = parallel::run_evaluation(
        &inp.loaded.index,
        &inp.samples,
        &inp.queries,
        &inp.cfg.scoring,
        &eval_options(&inp.cfg),
        &ByteHeuristicTokenizer,
        inp.cfg.workers,
    )?;
    print!("{}", report::render_table(&eval.report));
    report::write_evaluation(&inp.out, &eval, &inp.cfg)?;
    write_effective_config(&inp.out, &inp.cfg)?;
    log::info!(
        "index {} evaluated into {}",
        inp.index_dir.display(),
        inp.out.display()
    );
    Ok(())
}

pub fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    let inp = eval_inputs(&a.eval)?;
    let grid = AblationGrid {
        percentiles: a.percentiles.clone(),
        strategies: a.strategies.clone(),
        min_overlaps: a.min_overlaps.clone(),
        token_aggs: a.token_aggs.clone(),
    };
    for cfg in grid.configs() {
        cfg.validate()?;
    }
    let rows = parallel::run_ablation(
        &inp.loaded.index,
        &inp.samples,
        &inp.queries,
        &grid,
        &eval_options(&inp.cfg),
        &ByteHeuristicTokenizer,
        inp.cfg.workers,
    )?;
    print!("{}", report::ablation_csv(&rows));
    report::write_ablation(&inp.out, &rows, &inp.cfg)?;
    write_effective_config(&inp.out, &inp.cfg)
}

pub fn cmd_heatmap(a: &HeatmapArgs) -> Result<()> {
    let cfg = a.run.resolve(ConfigLayer {
        index: a.index.clone(),
        output: Some(a.out.clone()),
        ..Default::default()
    })?;
    let index_dir = required(&cfg.index, "index")?;
    let loaded = open_index(&index_dir)?;
    let page = loaded
        .index
        .embedding(&a.page)
        .ok_or_else(|| Error::Config(format!("page {:?} is not in the index", a.page)))?;
    let record = loaded.index.record(&a.page).expect("record");
    let q = pick_query(&a.query, a.query_id.as_deref())?;
    check_output(&a.out, &index_dir)?;
    let sim = similarity_matrix(&q, page)?;
    let scores = patch_scores(&sim, cfg.scoring.token_agg);
    let side = page.grid().grid_side() as usize;

    let comments = vec![
        format!("page={} query={}", a.page, q.id()),
        format!("config={}", cfg.to_json()),
    ];
    let csv = a.out.join("heatmap.csv");
    fs::write(&csv, heatmap::to_csv(&scores, side, &comments)).map_err(|e| Error::io(&csv, e))?;
    let pgm = a.out.join("heatmap.pgm");
    fs::write(&pgm, heatmap::to_pgm(&scores, side, &comments)).map_err(|e| Error::io(&pgm, e))?;

    if a.regions {
        let ranking = rank_regions_from_similarity(&sim, page.grid(), record, &cfg.scoring)?;
        let mut lines = Vec::new();
        for s in &ranking.scores {
            let reg = &record.regions[s.region_index];
            let model = scale_bbox(
                &reg.bbox,
                record.page_width,
                record.page_height,
                page.grid(),
            )?;
            lines.push(json!({
                "region_id": s.region_id,
                "rank": s.rank,
                "score": s.score,
                "selected": s.selected,
                "bbox": reg.bbox.to_array(),
                "model_bbox": model.to_array(),
            }));
        }
        write_jsonl(&a.out.join("heatmap_regions.jsonl"), &lines)?;
    }
    write_effective_config(&a.out, &cfg)?;
    println!(
        "wrote {side}x{side} heatmap for page {} to {}",
        a.page,
        a.out.display()
    );
    Ok(())
}

pub fn cmd_tokens(a: &TokensArgs) -> Result<()> {
    let mut did = false;
    if let Some(v) = &a.image {
        println!(
            "image_tokens {}x{} = {}",
            v[0],
            v[1],
            image_tokens(v[0], v[1])?
        );
        did = true;
    }
    if let (Some(m), Some(b)) = (a.method, a.baseline) {
        println!("savings = {:.1}%", token_savings(m, b)?);
        did = true;
    }
    if let Some(path) = &a.regions {
        let pages = load_regions(path)?;
        let (mut img, mut text) = (0u64, 0u64);
        println!("page_id,image_tokens,text_tokens");
        for p in &pages {
            let i = image_tokens(p.page_width, p.page_height)?;
            let t: u64 = p
                .regions
                .iter()
                .map(|r| text_tokens(&r.text, &ByteHeuristicTokenizer) as u64)
                .sum();
            println!("{},{i},{t}", p.page_id);
            img += i;
            text += t;
        }
        println!("total,{img},{text}");
        if img > 0 {
            println!(
                "all-region text vs full image: {:.1}% savings",
                token_savings(text, img)?
            );
        }
        did = true;
    }
    if !did {
        return Err(Error::Config(
            "nothing to do: pass --regions, --image or --method/--baseline".into(),
        ));
    }
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let grid = PatchGrid::new(a.grid_side, a.input_side)?;
    let spec = SynthSpec {
        pages: a.pages,
        planted: a.planted,
        grid,
        dim: a.dim,
        page_width: 2.0 * a.input_side as f64,
        page_height: 3.0 * a.input_side as f64,
        seed: a.seed,
        ..Default::default()
    };
    let corpus = SyntheticCorpus::generate(&spec)?;
    corpus.write(&a.out)?;
    println!(
        "wrote {} pages, {} queries, {} samples to {}",
        corpus.pages.len(),
        corpus.queries.len(),
        corpus.samples.len(),
        a.out.display()
    );
    for p in &corpus.planted {
        println!("  {} -> {} / {}", p.query_id, p.page_id, p.region_id);
    }
    Ok(())
}
