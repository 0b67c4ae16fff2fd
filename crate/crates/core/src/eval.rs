//! Localization metrics, token accounting and failure analysis.
//!
//! The primary per-sample IoU is the top-ranked region's IoU against the
//! best-matching ground-truth box. A sample is a hit when that IoU is at
//! least [`HIT_THRESHOLD`]. Misses split into `OcrCeiling` (no OCR region on
//! the page reaches the threshold against any ground-truth box, so no
//! ranking could have succeeded) and `SelectionError` (one did, but another
//! region was ranked first).

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::document::{EvalSample, OcrRegion, PageRecord};
use crate::embedding::QueryEmbedding;
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::index::{retrieve, score_page, CorpusIndex, DEFAULT_CANDIDATES};
use crate::scoring::{RegionScore, RegionStrategy, ScoringConfig, TokenAggregation};

/// IoU at or above which a top-1 prediction counts as a hit.
pub const HIT_THRESHOLD: f64 = 0.5;

/// Default hit-rate thresholds.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.25, 0.5, 0.7];

/// Longest image side accepted by the image-token estimate.
pub const MAX_IMAGE_SIDE: f64 = 1568.0;

/// Pixels per image token.
pub const PIXELS_PER_TOKEN: u64 = 750;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FailureClass {
    Hit,
    OcrCeiling,
    SelectionError,
    MissingPage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EvalMode {
    /// Score each sample's own page directly.
    #[default]
    Localization,
    /// Run both retrieval stages and score the top returned page.
    Retrieval,
}

/// Everything measured for one sample.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampleOutcome {
    pub sample_id: String,
    pub page_id: String,
    pub document_id: String,
    pub category: String,
    /// Page the prediction came from (differs from `page_id` only in retrieval mode).
    pub predicted_page_id: Option<String>,
    pub top_region_id: Option<String>,
    pub top1_iou: f64,
    pub best_selected_iou: f64,
    pub failure_class: FailureClass,
    pub selected_count: usize,
    pub tokens_selected: u64,
    pub tokens_all_regions: u64,
    pub tokens_full_image: u64,
    /// Page area over selected-region area, when anything was selected.
    pub context_reduction: Option<f64>,
}

impl SampleOutcome {
    pub fn is_scored(&self) -> bool {
        self.failure_class != FailureClass::MissingPage
    }

    pub fn is_failure(&self) -> bool {
        matches!(
            self.failure_class,
            FailureClass::OcrCeiling | FailureClass::SelectionError
        )
    }
}

/// `(top1_iou, best_selected_iou)` for a ranked region list.
///
/// Each region's IoU is its best IoU over all ground-truth boxes. An empty
/// ranking scores `(0, 0)`.
pub fn sample_iou(ranked: &[RegionScore], regions: &[OcrRegion], gt: &[BBox]) -> (f64, f64) {
    let best_gt = |r: &RegionScore| {
        let b = &regions[r.region_index].bbox;
        gt.iter().map(|g| iou(b, g)).fold(0.0, f64::max)
    };
    let top1 = ranked.first().map(best_gt).unwrap_or(0.0);
    let best = ranked
        .iter()
        .filter(|r| r.selected)
        .map(best_gt)
        .fold(top1, f64::max);
    (top1, best)
}

/// Fraction of `ious` at or above `tau`.
pub fn hit_rate(ious: &[f64], tau: f64) -> Result<f64> {
    if ious.is_empty() {
        return Err(Error::InvalidArgument("hit rate of empty IoU list".into()));
    }
    Ok(ious.iter().filter(|&&v| v >= tau).count() as f64 / ious.len() as f64)
}

/// Failure taxonomy for a scored sample.
pub fn classify_failure(top1_iou: f64, regions: &[OcrRegion], gt: &[BBox]) -> FailureClass {
    if top1_iou >= HIT_THRESHOLD {
        return FailureClass::Hit;
    }
    let reachable = regions
        .iter()
        .any(|r| gt.iter().any(|g| iou(&r.bbox, g) >= HIT_THRESHOLD));
    if reachable {
        FailureClass::SelectionError
    } else {
        FailureClass::OcrCeiling
    }
}

/// Image-token estimate for a `page_w x page_h` image: shrink to fit inside
/// 1568 x 1568 keeping aspect ratio, round each side, then `floor(w*h / 750)`.
pub fn image_tokens(page_w: f64, page_h: f64) -> Result<u64> {
    for (what, v) in [("image width", page_w), ("image height", page_h)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::NonPositive { what, value: v });
        }
    }
    let f = (MAX_IMAGE_SIDE / page_w)
        .min(MAX_IMAGE_SIDE / page_h)
        .min(1.0);
    let w = libm::round(page_w * f) as u64;
    let h = libm::round(page_h * f) as u64;
    Ok(w * h / PIXELS_PER_TOKEN)
}

/// Text token counter.
pub trait Tokenizer {
    fn count(&self, text: &str) -> usize;
}

/// `ceil(utf8_bytes / 4)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ByteHeuristicTokenizer;

impl Tokenizer for ByteHeuristicTokenizer {
    fn count(&self, text: &str) -> usize {
        text.len().div_ceil(4)
    }
}

impl<F: Fn(&str) -> usize> Tokenizer for F {
    fn count(&self, text: &str) -> usize {
        self(text)
    }
}

pub fn text_tokens(text: &str, tokenizer: &dyn Tokenizer) -> usize {
    if text.is_empty() {
        0
    } else {
        tokenizer.count(text)
    }
}

/// Percentage reduction of `method_total` relative to `baseline_total`.
pub fn token_savings(method_total: u64, baseline_total: u64) -> Result<f64> {
    if baseline_total == 0 {
        return Err(Error::ZeroBaseline);
    }
    Ok((baseline_total as f64 - method_total as f64) / baseline_total as f64 * 100.0)
}

/// Page area divided by the total area of the selected regions.
pub fn context_reduction_factor(page_area: f64, selected_areas: &[f64]) -> Result<f64> {
    if selected_areas.is_empty() {
        return Err(Error::EmptySelection);
    }
    if !(page_area > 0.0 && page_area.is_finite()) {
        return Err(Error::NonPositive {
            what: "page area",
            value: page_area,
        });
    }
    let mut total = 0.0;
    for &a in selected_areas {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::NonPositive {
                what: "region area",
                value: a,
            });
        }
        total += a;
    }
    Ok(page_area / total)
}

/// One-way sum-of-squares split of a score across groups.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VarianceDecomposition {
    pub within_fraction: f64,
    pub between_fraction: f64,
    pub within_ss: f64,
    pub between_ss: f64,
    pub total_ss: f64,
    /// Set when the total sum of squares is zero; both fractions are then 0.
    pub zero_variance: bool,
}

/// Within/between-group decomposition of the values in `groups`.
pub fn variance_decomposition<K: Ord>(
    groups: &BTreeMap<K, Vec<f64>>,
) -> Result<VarianceDecomposition> {
    let nonempty: Vec<&Vec<f64>> = groups.values().filter(|g| !g.is_empty()).collect();
    if nonempty.len() < 2 {
        return Err(Error::InvalidArgument(
            "variance decomposition needs at least two groups with samples".into(),
        ));
    }
    let n: usize = nonempty.iter().map(|g| g.len()).sum();
    let grand = nonempty.iter().flat_map(|g| g.iter()).sum::<f64>() / n as f64;
    let mut within = 0.0;
    let mut between = 0.0;
    for g in &nonempty {
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        between += g.len() as f64 * (mean - grand) * (mean - grand);
        within += g.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    }
    let total = within + between;
    if total <= 0.0 {
        return Ok(VarianceDecomposition {
            within_fraction: 0.0,
            between_fraction: 0.0,
            within_ss: within,
            between_ss: between,
            total_ss: total,
            zero_variance: true,
        });
    }
    Ok(VarianceDecomposition {
        within_fraction: within / total,
        between_fraction: between / total,
        within_ss: within,
        between_ss: between,
        total_ss: total,
        zero_variance: false,
    })
}

/// Evaluation knobs outside the scoring config.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalOptions {
    pub mode: EvalMode,
    pub thresholds: Vec<f64>,
    /// Stage-1 candidates (retrieval mode).
    pub candidates: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            mode: EvalMode::Localization,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            candidates: DEFAULT_CANDIDATES,
        }
    }
}

fn missing(sample: &EvalSample) -> SampleOutcome {
    SampleOutcome {
        sample_id: sample.sample_id.clone(),
        page_id: sample.page_id.clone(),
        document_id: sample.document_id.clone(),
        category: sample.category.clone(),
        predicted_page_id: None,
        top_region_id: None,
        top1_iou: 0.0,
        best_selected_iou: 0.0,
        failure_class: FailureClass::MissingPage,
        selected_count: 0,
        tokens_selected: 0,
        tokens_all_regions: 0,
        tokens_full_image: 0,
        context_reduction: None,
    }
}

/// Scores one sample. A page absent from the index (or without patch
/// embeddings) yields a `MissingPage` outcome rather than an error.
pub fn evaluate_sample(
    idx: &CorpusIndex,
    sample: &EvalSample,
    query: &QueryEmbedding,
    cfg: &ScoringConfig,
    opts: &EvalOptions,
    tokenizer: &dyn Tokenizer,
) -> Result<SampleOutcome> {
    let (Some(gt_record), Some(gt_page)) =
        (idx.record(&sample.page_id), idx.embedding(&sample.page_id))
    else {
        return Ok(missing(sample));
    };

    let result = match opts.mode {
        EvalMode::Localization => Some(score_page(query, gt_page, gt_record, cfg, 1)?),
        EvalMode::Retrieval => {
            let k = opts.candidates.max(1);
            retrieve(query, idx, k, cfg, 1)?.results.into_iter().next()
        }
    };

    let mut outcome = missing(sample);
    outcome.failure_class = FailureClass::OcrCeiling;
    let Some(result) = result else {
        outcome.failure_class = classify_failure(0.0, &gt_record.regions, &sample.gt_bboxes);
        return Ok(outcome);
    };
    let record: &PageRecord = if result.page_id == sample.page_id {
        gt_record
    } else {
        idx.record(&result.page_id).ok_or(Error::EmptyIndex)?
    };

    let (top1, best) = if result.page_id == sample.page_id {
        sample_iou(&result.regions, &record.regions, &sample.gt_bboxes)
    } else {
        (0.0, 0.0)
    };
    let text =
        |r: &RegionScore| text_tokens(&record.regions[r.region_index].text, tokenizer) as u64;
    let selected: Vec<&RegionScore> = result.regions.iter().filter(|r| r.selected).collect();
    let areas: Vec<f64> = selected
        .iter()
        .map(|r| record.regions[r.region_index].bbox.area())
        .filter(|&a| a > 0.0)
        .collect();

    outcome.predicted_page_id = Some(result.page_id.clone());
    outcome.top_region_id = result.regions.first().map(|r| r.region_id.clone());
    outcome.top1_iou = top1;
    outcome.best_selected_iou = best;
    outcome.failure_class = classify_failure(top1, &gt_record.regions, &sample.gt_bboxes);
    outcome.selected_count = selected.len();
    outcome.tokens_selected = selected.iter().map(|r| text(r)).sum();
    outcome.tokens_all_regions = record
        .regions
        .iter()
        .map(|r| text_tokens(&r.text, tokenizer) as u64)
        .sum();
    outcome.tokens_full_image = image_tokens(record.page_width, record.page_height)?;
    outcome.context_reduction = context_reduction_factor(record.page_area(), &areas).ok();
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HitRate {
    pub threshold: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FailureCounts {
    pub hit: usize,
    pub ocr_ceiling: usize,
    pub selection_error: usize,
    pub missing_page: usize,
}

impl FailureCounts {
    pub fn total(&self) -> usize {
        self.hit + self.ocr_ceiling + self.selection_error + self.missing_page
    }
}

/// Aggregate metrics for one category or the whole run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricRow {
    pub label: String,
    /// All samples, including missing pages.
    pub samples: usize,
    /// Samples that were actually scored.
    pub scored: usize,
    pub mean_iou: f64,
    pub mean_best_selected_iou: f64,
    pub hit_rates: Vec<HitRate>,
    pub tokens_selected: u64,
    pub tokens_all_regions: u64,
    pub tokens_full_image: u64,
    pub savings_vs_all_regions: Option<f64>,
    pub savings_vs_full_image: Option<f64>,
    pub failures: FailureCounts,
    /// Failures where no selected region reaches the hit threshold either.
    pub no_selected_adequate: usize,
    pub failure_mean_iou: Option<f64>,
    /// Share of failures whose top-1 IoU is still at least 0.25.
    pub failure_partial_overlap_rate: Option<f64>,
}

impl MetricRow {
    pub fn hit_rate(&self, threshold: f64) -> Option<f64> {
        self.hit_rates
            .iter()
            .find(|h| h.threshold == threshold)
            .map(|h| h.rate)
    }
}

fn metric_row(label: String, outcomes: &[&SampleOutcome], thresholds: &[f64]) -> MetricRow {
    let scored: Vec<&SampleOutcome> = outcomes.iter().copied().filter(|o| o.is_scored()).collect();
    let ious: Vec<f64> = scored.iter().map(|o| o.top1_iou).collect();
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let best: Vec<f64> = scored.iter().map(|o| o.best_selected_iou).collect();
    let hit_rates = thresholds
        .iter()
        .map(|&t| HitRate {
            threshold: t,
            rate: hit_rate(&ious, t).unwrap_or(0.0),
        })
        .collect();

    let mut failures = FailureCounts::default();
    for o in outcomes {
        match o.failure_class {
            FailureClass::Hit => failures.hit += 1,
            FailureClass::OcrCeiling => failures.ocr_ceiling += 1,
            FailureClass::SelectionError => failures.selection_error += 1,
            FailureClass::MissingPage => failures.missing_page += 1,
        }
    }
    let failed: Vec<f64> = scored
        .iter()
        .filter(|o| o.is_failure())
        .map(|o| o.top1_iou)
        .collect();
    let no_selected_adequate = scored
        .iter()
        .filter(|o| o.is_failure() && o.best_selected_iou < HIT_THRESHOLD)
        .count();

    let tokens_selected = scored.iter().map(|o| o.tokens_selected).sum();
    let tokens_all_regions = scored.iter().map(|o| o.tokens_all_regions).sum();
    let tokens_full_image = scored.iter().map(|o| o.tokens_full_image).sum();

    MetricRow {
        label,
        samples: outcomes.len(),
        scored: scored.len(),
        mean_iou: mean(&ious),
        mean_best_selected_iou: mean(&best),
        hit_rates,
        tokens_selected,
        tokens_all_regions,
        tokens_full_image,
        savings_vs_all_regions: token_savings(tokens_selected, tokens_all_regions).ok(),
        savings_vs_full_image: token_savings(tokens_selected, tokens_full_image).ok(),
        failures,
        no_selected_adequate,
        failure_mean_iou: (!failed.is_empty()).then(|| mean(&failed)),
        failure_partial_overlap_rate: hit_rate(&failed, 0.25).ok(),
    }
}

/// Report for one configuration.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub config: ScoringConfig,
    pub mode: EvalMode,
    pub overall: MetricRow,
    /// Sorted by category name.
    pub categories: Vec<MetricRow>,
    /// Top-1 IoU split by document; absent with fewer than two documents.
    pub variance: Option<VarianceDecomposition>,
}

/// Aggregates per-sample outcomes into a report.
pub fn build_report(
    outcomes: &[SampleOutcome],
    thresholds: &[f64],
    config: ScoringConfig,
    mode: EvalMode,
) -> EvalReport {
    let all: Vec<&SampleOutcome> = outcomes.iter().collect();
    let mut by_cat: BTreeMap<&str, Vec<&SampleOutcome>> = BTreeMap::new();
    let mut by_doc: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for o in outcomes {
        by_cat.entry(&o.category).or_default().push(o);
        if o.is_scored() {
            by_doc.entry(&o.document_id).or_default().push(o.top1_iou);
        }
    }
    EvalReport {
        config,
        mode,
        overall: metric_row("overall".into(), &all, thresholds),
        categories: by_cat
            .into_iter()
            .map(|(c, v)| metric_row(c.into(), &v, thresholds))
            .collect(),
        variance: variance_decomposition(&by_doc).ok(),
    }
}

/// Report plus the per-sample records it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub outcomes: Vec<SampleOutcome>,
}

/// Resolves a sample's query, failing on unknown references.
pub fn resolve_query<'a>(
    queries: &'a BTreeMap<String, QueryEmbedding>,
    sample: &EvalSample,
) -> Result<&'a QueryEmbedding> {
    queries.get(&sample.query_ref).ok_or_else(|| {
        Error::InvalidArgument(alloc::format!(
            "sample {:?} references unknown query {:?}",
            sample.sample_id,
            sample.query_ref
        ))
    })
}

/// Scores every sample sequentially and builds the report.
pub fn run_evaluation(
    idx: &CorpusIndex,
    samples: &[EvalSample],
    queries: &BTreeMap<String, QueryEmbedding>,
    cfg: &ScoringConfig,
    opts: &EvalOptions,
    tokenizer: &dyn Tokenizer,
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    cfg.validate()?;
    let outcomes = samples
        .iter()
        .map(|s| evaluate_sample(idx, s, resolve_query(queries, s)?, cfg, opts, tokenizer))
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation {
        report: build_report(&outcomes, &opts.thresholds, *cfg, opts.mode),
        outcomes,
    })
}

/// Cartesian grid of scoring configurations.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AblationGrid {
    pub percentiles: Vec<f64>,
    pub strategies: Vec<RegionStrategy>,
    pub min_overlaps: Vec<f64>,
    pub token_aggs: Vec<TokenAggregation>,
}

impl Default for AblationGrid {
    /// P25/P75 x {max, iou_weighted} x {0.1, 0.25, 0.5}, max token aggregation.
    fn default() -> Self {
        Self {
            percentiles: alloc::vec![25.0, 75.0],
            strategies: alloc::vec![RegionStrategy::Max, RegionStrategy::IouWeighted],
            min_overlaps: alloc::vec![0.1, 0.25, 0.5],
            token_aggs: alloc::vec![TokenAggregation::Max],
        }
    }
}

impl AblationGrid {
    /// Configurations in nested order: percentile, strategy, min overlap, token aggregation.
    pub fn configs(&self) -> Vec<ScoringConfig> {
        let mut out = Vec::new();
        for &percentile in &self.percentiles {
            for &strategy in &self.strategies {
                for &min_overlap in &self.min_overlaps {
                    for &token_agg in &self.token_aggs {
                        out.push(ScoringConfig {
                            token_agg,
                            strategy,
                            percentile,
                            min_overlap,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.percentiles.len()
            * self.strategies.len()
            * self.min_overlaps.len()
            * self.token_aggs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Runs [`run_evaluation`] once per grid configuration.
pub fn run_ablation(
    idx: &CorpusIndex,
    samples: &[EvalSample],
    queries: &BTreeMap<String, QueryEmbedding>,
    grid: &AblationGrid,
    opts: &EvalOptions,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<Evaluation>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty ablation grid".into()));
    }
    grid.configs()
        .iter()
        .map(|cfg| run_evaluation(idx, samples, queries, cfg, opts, tokenizer))
        .collect()
}
