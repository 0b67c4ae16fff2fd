//! Relevance propagation from patch similarities to OCR regions.
//!
//! Pipeline for one page:
//!
//! ```text
//! S[i][j]    = cos(q_i, d_j)                       n x m similarity matrix
//! patch(j)   = agg_i S[i][j]                       max (default), mean or sum
//! page       = sum_i max_j S[i][j]                 MaxSim
//! rel(r)     = agg_{j in covered(r)} patch(j)      max, mean or IoU-weighted
//! ```
//!
//! Regions are sorted by `rel` (stable, so ties keep input order) and those
//! at or above the configured percentile of the page's region scores are
//! selected. The top region is always selected.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::document::PageRecord;
use crate::embedding::{dot, PageEmbedding, QueryEmbedding};
use crate::error::{Error, Result};
use crate::geometry::{covered, scale_bbox, PatchCoverage, PatchGrid};

/// Reduction over query tokens for each patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TokenAggregation {
    #[default]
    Max,
    Mean,
    Sum,
}

/// Reduction over a region's covered patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RegionStrategy {
    #[default]
    Max,
    Mean,
    IouWeighted,
}

impl core::str::FromStr for TokenAggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Self::Max),
            "mean" => Ok(Self::Mean),
            "sum" => Ok(Self::Sum),
            other => Err(Error::InvalidArgument(alloc::format!(
                "unknown token aggregation {other:?} (expected max, mean or sum)"
            ))),
        }
    }
}

impl core::str::FromStr for RegionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Self::Max),
            "mean" => Ok(Self::Mean),
            "iou_weighted" | "weighted_avg" => Ok(Self::IouWeighted),
            other => Err(Error::InvalidArgument(alloc::format!(
                "unknown region strategy {other:?} (expected max, mean or iou_weighted)"
            ))),
        }
    }
}

impl core::fmt::Display for TokenAggregation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Self::Max => "max",
            Self::Mean => "mean",
            Self::Sum => "sum",
        })
    }
}

impl core::fmt::Display for RegionStrategy {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Self::Max => "max",
            Self::Mean => "mean",
            Self::IouWeighted => "iou_weighted",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScoringConfig {
    pub token_agg: TokenAggregation,
    pub strategy: RegionStrategy,
    /// Selection percentile in `[0, 100]`.
    pub percentile: f64,
    /// Minimum fraction of a patch's area inside a region, in `[0, 1]`.
    pub min_overlap: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            token_agg: TokenAggregation::Max,
            strategy: RegionStrategy::Max,
            percentile: 50.0,
            min_overlap: 0.25,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=100.0).contains(&self.percentile) {
            return Err(Error::InvalidArgument(alloc::format!(
                "percentile {} outside [0, 100]",
                self.percentile
            )));
        }
        if !(0.0..=1.0).contains(&self.min_overlap) {
            return Err(Error::InvalidArgument(alloc::format!(
                "min_overlap {} outside [0, 1]",
                self.min_overlap
            )));
        }
        Ok(())
    }
}

/// `n x m` cosine similarities between query tokens and page patches.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl SimilarityMatrix {
    pub fn from_rows(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(Error::InvalidArgument(alloc::format!(
                "similarity matrix needs {rows} x {cols} values, got {}",
                values.len()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    /// Query tokens `n`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Patches `m`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

/// Cosine similarity of every query token against every patch.
/// Zero-norm rows on either side give similarity 0.
pub fn similarity_matrix(q: &QueryEmbedding, p: &PageEmbedding) -> Result<SimilarityMatrix> {
    if q.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            query: q.dim(),
            page: p.dim(),
        });
    }
    let m = p.len();
    let inv = p.inv_norms();
    let mut values = Vec::with_capacity(q.len() * m);
    for qi in q.rows() {
        let qn = libm::sqrtf(dot(qi, qi));
        let qinv = if qn > 0.0 { 1.0 / qn } else { 0.0 };
        for (j, &dinv) in inv.iter().enumerate() {
            values.push(dot(qi, p.patch(j)) * qinv * dinv);
        }
    }
    Ok(SimilarityMatrix {
        rows: q.len(),
        cols: m,
        values,
    })
}

/// Column-wise reduction of `S` over query tokens.
pub fn patch_scores(s: &SimilarityMatrix, agg: TokenAggregation) -> Vec<f64> {
    let init = match agg {
        TokenAggregation::Max => f64::NEG_INFINITY,
        TokenAggregation::Mean | TokenAggregation::Sum => 0.0,
    };
    let mut out = vec![init; s.cols];
    for i in 0..s.rows {
        for (o, &v) in out.iter_mut().zip(s.row(i)) {
            let v = v as f64;
            match agg {
                TokenAggregation::Max => *o = o.max(v),
                _ => *o += v,
            }
        }
    }
    if agg == TokenAggregation::Mean {
        let n = s.rows as f64;
        out.iter_mut().for_each(|o| *o /= n);
    }
    out
}

/// MaxSim page score: sum over query tokens of the best patch similarity.
pub fn page_score(s: &SimilarityMatrix) -> f64 {
    (0..s.rows)
        .map(|i| s.row(i).iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64)
        .sum()
}

/// Region relevance from the scores of its covered patches.
pub fn aggregate_region(
    patch_scores: &[f64],
    coverage: &[PatchCoverage],
    strategy: RegionStrategy,
) -> Result<f64> {
    if coverage.is_empty() {
        return Err(Error::EmptyCoverage);
    }
    let score = |c: &PatchCoverage| patch_scores[c.patch_index];
    Ok(match strategy {
        RegionStrategy::Max => coverage.iter().map(score).fold(f64::NEG_INFINITY, f64::max),
        RegionStrategy::Mean => coverage.iter().map(score).sum::<f64>() / coverage.len() as f64,
        RegionStrategy::IouWeighted => {
            let (num, den) = coverage
                .iter()
                .fold((0.0, 0.0), |(n, d), c| (n + c.iou * score(c), d + c.iou));
            num / den
        }
    })
}

/// Linear-interpolation percentile of `values` (`p` in `[0, 100]`).
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("percentile of empty set".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidArgument(alloc::format!(
            "percentile {p} outside [0, 100]"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = libm::ceil(pos) as usize;
    let frac = pos - lo as f64;
    if lo == hi || frac == 0.0 {
        Ok(sorted[lo])
    } else {
        Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
    }
}

/// Selection flags, one per score: `score >= percentile(scores, p)`.
/// The highest score (first occurrence) is always selected.
pub fn select_regions(scores: &[f64], p: f64) -> Result<Vec<bool>> {
    let t = percentile(scores, p)?;
    let mut flags: Vec<bool> = scores.iter().map(|&s| s >= t).collect();
    let top = scores
        .iter()
        .enumerate()
        .fold(0, |best, (i, &s)| if s > scores[best] { i } else { best });
    flags[top] = true;
    Ok(flags)
}

/// Scored region on one page.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegionScore {
    pub region_id: String,
    /// Position of the region in [`PageRecord::regions`].
    pub region_index: usize,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
    pub selected: bool,
    pub coverage_count: usize,
}

/// Ranked regions of one page plus the regions that could not be scored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegionRanking {
    /// Ordered by rank.
    pub scores: Vec<RegionScore>,
    /// Region ids with no covered patch after scaling and `min_overlap`.
    pub uncovered: Vec<String>,
}

impl RegionRanking {
    pub fn top(&self) -> Option<&RegionScore> {
        self.scores.first()
    }

    pub fn selected(&self) -> impl Iterator<Item = &RegionScore> {
        self.scores.iter().filter(|r| r.selected)
    }
}

/// Full per-page pipeline: similarity, patch scores, region ranking.
pub fn rank_regions(
    q: &QueryEmbedding,
    p: &PageEmbedding,
    record: &PageRecord,
    cfg: &ScoringConfig,
) -> Result<RegionRanking> {
    let s = similarity_matrix(q, p)?;
    rank_regions_from_similarity(&s, p.grid(), record, cfg)
}

/// Region ranking from a similarity matrix.
///
/// Mean token aggregation ranks on the token sums and divides the reported
/// scores afterwards, so mean and sum yield bit-identical rankings and
/// selections.
pub fn rank_regions_from_similarity(
    s: &SimilarityMatrix,
    grid: PatchGrid,
    record: &PageRecord,
    cfg: &ScoringConfig,
) -> Result<RegionRanking> {
    if cfg.token_agg != TokenAggregation::Mean {
        return rank_regions_from_patch_scores(&patch_scores(s, cfg.token_agg), grid, record, cfg);
    }
    let sum_cfg = ScoringConfig {
        token_agg: TokenAggregation::Sum,
        ..*cfg
    };
    let mut ranking = rank_regions_from_patch_scores(
        &patch_scores(s, TokenAggregation::Sum),
        grid,
        record,
        &sum_cfg,
    )?;
    let n = s.rows as f64;
    ranking.scores.iter_mut().for_each(|r| r.score /= n);
    Ok(ranking)
}

/// Region ranking from precomputed patch scores (`len == grid.patch_count()`).
pub fn rank_regions_from_patch_scores(
    patch_scores: &[f64],
    grid: PatchGrid,
    record: &PageRecord,
    cfg: &ScoringConfig,
) -> Result<RegionRanking> {
    cfg.validate()?;
    if patch_scores.len() != grid.patch_count() {
        return Err(Error::ShapeMismatch {
            id: record.page_id.clone(),
            expected: grid.patch_count(),
            actual: patch_scores.len(),
        });
    }
    let mut ranking = RegionRanking::default();
    let mut scored = Vec::with_capacity(record.regions.len());
    for (index, region) in record.regions.iter().enumerate() {
        let model_box = scale_bbox(&region.bbox, record.page_width, record.page_height, grid)?;
        let cover = covered(&model_box, grid, cfg.min_overlap);
        match aggregate_region(patch_scores, &cover, cfg.strategy) {
            Ok(score) => scored.push(RegionScore {
                region_id: region.region_id.clone(),
                region_index: index,
                score,
                rank: 0,
                selected: false,
                coverage_count: cover.len(),
            }),
            Err(Error::EmptyCoverage) => ranking.uncovered.push(region.region_id.clone()),
            Err(e) => return Err(e),
        }
    }
    if scored.is_empty() {
        return Ok(ranking);
    }
    // stable: equal scores keep input order
    scored.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal));
    let values: Vec<f64> = scored.iter().map(|r| r.score).collect();
    let flags = select_regions(&values, cfg.percentile)?;
    for (i, (r, sel)) in scored.iter_mut().zip(flags).enumerate() {
        r.rank = i + 1;
        r.selected = sel;
    }
    ranking.scores = scored;
    Ok(ranking)
}
