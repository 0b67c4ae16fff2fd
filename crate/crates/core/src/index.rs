//! Two-stage retrieval over an in-memory corpus.
//!
//! Stage 1 ranks every page by cosine similarity between the mean-pooled,
//! renormalized query and each page's pooled patch vector: `O(N * d)`.
//! Stage 2 runs full late interaction and region ranking on the top `K`
//! candidates only: `O(K * n * G^2 * d + K * M * G^2)`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::document::PageRecord;
use crate::embedding::{dot, PageEmbedding, QueryEmbedding};
use crate::error::{Error, Result};
use crate::geometry::PatchGrid;
use crate::scoring::{page_score, rank_regions_from_similarity, similarity_matrix};
use crate::scoring::{RegionScore, ScoringConfig};

/// Default Stage-1 candidate count.
pub const DEFAULT_CANDIDATES: usize = 100;

struct Entry {
    page_id: String,
    patches: Option<PageEmbedding>,
    record: PageRecord,
}

/// Pages, their OCR records, and the pooled matrix used by Stage 1.
pub struct CorpusIndex {
    grid: PatchGrid,
    dim: usize,
    entries: Vec<Entry>,
    by_id: BTreeMap<String, usize>,
    pooled: Vec<f32>,
    pooled_inv_norm: Vec<f32>,
}

impl core::fmt::Debug for CorpusIndex {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("CorpusIndex")
            .field("grid", &self.grid)
            .field("dim", &self.dim)
            .field("pages", &self.entries.len())
            .finish()
    }
}

impl CorpusIndex {
    pub fn new(grid: PatchGrid, dim: usize) -> Self {
        Self {
            grid,
            dim,
            entries: Vec::new(),
            by_id: BTreeMap::new(),
            pooled: Vec::new(),
            pooled_inv_norm: Vec::new(),
        }
    }

    pub fn grid(&self) -> PatchGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds a page. The record's `page_id` must match the embedding's.
    pub fn insert(&mut self, page: PageEmbedding, record: PageRecord) -> Result<()> {
        if page.grid() != self.grid {
            return Err(Error::InvalidArgument(alloc::format!(
                "page {:?} has grid {}x{}@{}, index expects {}x{}@{}",
                page.id(),
                page.grid().grid_side(),
                page.grid().grid_side(),
                page.grid().input_side(),
                self.grid.grid_side(),
                self.grid.grid_side(),
                self.grid.input_side()
            )));
        }
        let pooled = page.pooled().to_vec();
        let id = String::from(page.id());
        self.push(id, pooled, Some(page), record)
    }

    /// Adds a page known only by its pooled vector. Stage 1 can return it;
    /// Stage 2 skips it with a diagnostic.
    pub fn insert_pooled_only(
        &mut self,
        page_id: String,
        pooled: Vec<f32>,
        record: PageRecord,
    ) -> Result<()> {
        self.push(page_id, pooled, None, record)
    }

    fn push(
        &mut self,
        page_id: String,
        pooled: Vec<f32>,
        patches: Option<PageEmbedding>,
        record: PageRecord,
    ) -> Result<()> {
        if pooled.len() != self.dim {
            return Err(Error::DimensionMismatch {
                query: self.dim,
                page: pooled.len(),
            });
        }
        if record.page_id != page_id {
            return Err(Error::InvalidArgument(alloc::format!(
                "record {:?} attached to page {:?}",
                record.page_id,
                page_id
            )));
        }
        record.validate()?;
        if self.by_id.contains_key(&page_id) {
            return Err(Error::InvalidArgument(alloc::format!(
                "duplicate page id {page_id:?}"
            )));
        }
        let norm = libm::sqrtf(dot(&pooled, &pooled));
        self.pooled_inv_norm
            .push(if norm > 0.0 { 1.0 / norm } else { 0.0 });
        self.pooled.extend_from_slice(&pooled);
        self.by_id.insert(page_id.clone(), self.entries.len());
        self.entries.push(Entry {
            page_id,
            patches,
            record,
        });
        Ok(())
    }

    pub fn page_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.page_id.as_str())
    }

    pub fn position(&self, page_id: &str) -> Option<usize> {
        self.by_id.get(page_id).copied()
    }

    pub fn embedding(&self, page_id: &str) -> Option<&PageEmbedding> {
        self.position(page_id)
            .and_then(|i| self.entries[i].patches.as_ref())
    }

    pub fn record(&self, page_id: &str) -> Option<&PageRecord> {
        self.position(page_id).map(|i| &self.entries[i].record)
    }

    /// Row `i` of the Stage-1 matrix (page `i`'s pooled vector).
    pub fn pooled_row(&self, i: usize) -> &[f32] {
        &self.pooled[i * self.dim..(i + 1) * self.dim]
    }

    pub fn region_count(&self) -> usize {
        self.entries.iter().map(|e| e.record.regions.len()).sum()
    }
}

/// A Stage-1 hit.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub page_id: String,
    /// 1-based Stage-1 rank.
    pub rank: usize,
    /// Cosine similarity of pooled vectors.
    pub similarity: f64,
}

/// Top-`k` pages by pooled cosine similarity; ties go to the smaller page id.
pub fn stage1_candidates(
    q: &QueryEmbedding,
    idx: &CorpusIndex,
    k: usize,
) -> Result<Vec<Candidate>> {
    if idx.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if k == 0 {
        return Err(Error::InvalidArgument(
            "candidate count K must be >= 1".into(),
        ));
    }
    if q.dim() != idx.dim {
        return Err(Error::DimensionMismatch {
            query: q.dim(),
            page: idx.dim,
        });
    }
    let query = q.pooled_unit();
    let mut scored: Vec<(usize, f32)> = idx
        .pooled
        .chunks_exact(idx.dim)
        .zip(&idx.pooled_inv_norm)
        .enumerate()
        .map(|(i, (row, &inv))| (i, dot(&query, row) * inv))
        .collect();
    let by_score = |a: &(usize, f32), b: &(usize, f32)| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| idx.entries[a.0].page_id.cmp(&idx.entries[b.0].page_id))
    };
    let k = k.min(scored.len());
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, by_score);
        scored.truncate(k);
    }
    scored.sort_by(by_score);
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(r, (i, sim))| Candidate {
            page_id: idx.entries[i].page_id.clone(),
            rank: r + 1,
            similarity: sim as f64,
        })
        .collect())
}

/// One reranked page.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RetrievalResult {
    pub page_id: String,
    /// MaxSim score.
    pub page_score: f64,
    /// Ordered by rank.
    pub regions: Vec<RegionScore>,
    /// Region ids that had no covered patches.
    pub uncovered: Vec<String>,
    pub stage1_rank: usize,
}

/// Output of [`retrieve`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Retrieval {
    /// Ordered by page score, descending.
    pub results: Vec<RetrievalResult>,
    /// Candidates dropped in Stage 2 because their patches are unavailable.
    pub skipped: Vec<String>,
}

/// Stage 2 on a given candidate list: full late interaction plus region ranking.
/// Results are sorted by page score, ties by Stage-1 rank.
pub fn rerank(
    q: &QueryEmbedding,
    idx: &CorpusIndex,
    candidates: &[Candidate],
    cfg: &ScoringConfig,
) -> Result<Retrieval> {
    let mut out = Retrieval::default();
    for c in candidates {
        let Some(pos) = idx.position(&c.page_id) else {
            out.skipped.push(c.page_id.clone());
            continue;
        };
        let entry = &idx.entries[pos];
        let Some(page) = entry.patches.as_ref() else {
            out.skipped.push(c.page_id.clone());
            continue;
        };
        out.results
            .push(score_page(q, page, &entry.record, cfg, c.rank)?);
    }
    sort_results(&mut out.results);
    Ok(out)
}

/// Scores one page against a query.
pub fn score_page(
    q: &QueryEmbedding,
    page: &PageEmbedding,
    record: &PageRecord,
    cfg: &ScoringConfig,
    stage1_rank: usize,
) -> Result<RetrievalResult> {
    let s = similarity_matrix(q, page)?;
    let ranking = rank_regions_from_similarity(&s, page.grid(), record, cfg)?;
    Ok(RetrievalResult {
        page_id: String::from(page.id()),
        page_score: page_score(&s),
        regions: ranking.scores,
        uncovered: ranking.uncovered,
        stage1_rank,
    })
}

/// Deterministic result order: page score descending, then Stage-1 rank.
pub fn sort_results(results: &mut [RetrievalResult]) {
    results.sort_by(|a, b| {
        b.page_score
            .partial_cmp(&a.page_score)
            .unwrap_or(Ordering::Equal)
            .then(a.stage1_rank.cmp(&b.stage1_rank))
    });
}

/// Both stages: `k` candidates from Stage 1, the best `top_pages` after Stage 2.
pub fn retrieve(
    q: &QueryEmbedding,
    idx: &CorpusIndex,
    k: usize,
    cfg: &ScoringConfig,
    top_pages: usize,
) -> Result<Retrieval> {
    if top_pages == 0 || top_pages > k {
        return Err(Error::InvalidArgument(alloc::format!(
            "need K >= top_pages >= 1, got K={k}, top_pages={top_pages}"
        )));
    }
    cfg.validate()?;
    let candidates = stage1_candidates(q, idx, k)?;
    let mut out = rerank(q, idx, &candidates, cfg)?;
    out.results.truncate(top_pages);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn grid() -> PatchGrid {
        PatchGrid::new(2, 28).unwrap()
    }

    fn page(id: &str, rows: [[f32; 2]; 4]) -> (PageEmbedding, PageRecord) {
        let e = PageEmbedding::new(id, grid(), 2, rows.concat()).unwrap();
        (e, PageRecord::empty(id, 28.0, 28.0))
    }

    #[test]
    fn stage1_orders_by_pooled_cosine() {
        let mut idx = CorpusIndex::new(grid(), 2);
        let (a, ra) = page("a", [[0.0, 1.0]; 4]);
        let (b, rb) = page("b", [[1.0, 0.0]; 4]);
        idx.insert(a, ra).unwrap();
        idx.insert(b, rb).unwrap();
        let q = QueryEmbedding::new("q", 2, vec![1.0, 0.0, 1.0, 0.1]).unwrap();
        let c = stage1_candidates(&q, &idx, 5).unwrap();
        assert_eq!(
            c.iter().map(|c| c.page_id.as_str()).collect::<Vec<_>>(),
            ["b", "a"]
        );
        assert_eq!(c[0].rank, 1);
        let c = stage1_candidates(&q, &idx, 1).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].page_id, "b");
    }

    #[test]
    fn stage1_ties_go_to_smaller_page_id() {
        let mut idx = CorpusIndex::new(grid(), 2);
        for id in ["c", "a", "b"] {
            let (p, r) = page(id, [[1.0, 0.0]; 4]);
            idx.insert(p, r).unwrap();
        }
        let q = QueryEmbedding::new("q", 2, vec![1.0, 0.0]).unwrap();
        let ids = |k| {
            stage1_candidates(&q, &idx, k)
                .unwrap()
                .into_iter()
                .map(|c| c.page_id)
                .collect::<Vec<_>>()
        };
        assert_eq!(ids(3), ["a", "b", "c"]);
        assert_eq!(ids(1), ["a"]);
    }

    #[test]
    fn empty_index_and_bad_k() {
        let idx = CorpusIndex::new(grid(), 2);
        let q = QueryEmbedding::new("q", 2, vec![1.0, 0.0]).unwrap();
        assert_eq!(stage1_candidates(&q, &idx, 3), Err(Error::EmptyIndex));
        let mut idx = CorpusIndex::new(grid(), 2);
        let (a, ra) = page("a", [[0.0, 1.0]; 4]);
        idx.insert(a, ra).unwrap();
        assert!(stage1_candidates(&q, &idx, 0).is_err());
        assert!(retrieve(&q, &idx, 1, &ScoringConfig::default(), 2).is_err());
    }

    #[test]
    fn single_page_corpus() {
        let mut idx = CorpusIndex::new(grid(), 2);
        let (a, ra) = page("only", [[0.6, 0.8]; 4]);
        idx.insert(a, ra).unwrap();
        let q = QueryEmbedding::new("q", 2, vec![0.0, 1.0]).unwrap();
        let r = retrieve(&q, &idx, 1, &ScoringConfig::default(), 1).unwrap();
        assert_eq!(r.results.len(), 1);
        assert_eq!(r.results[0].stage1_rank, 1);
        assert_eq!(r.results[0].page_id, "only");
    }

    #[test]
    fn pooled_only_pages_are_skipped() {
        let mut idx = CorpusIndex::new(grid(), 2);
        let (a, ra) = page("a", [[0.0, 1.0]; 4]);
        idx.insert(a, ra).unwrap();
        idx.insert_pooled_only(
            "ghost".into(),
            vec![1.0, 0.0],
            PageRecord::empty("ghost", 10.0, 10.0),
        )
        .unwrap();
        let q = QueryEmbedding::new("q", 2, vec![1.0, 0.0]).unwrap();
        let r = retrieve(&q, &idx, 2, &ScoringConfig::default(), 2).unwrap();
        assert_eq!(r.skipped, ["ghost"]);
        assert_eq!(r.results.len(), 1);
    }

    #[test]
    fn rejects_mismatched_pages() {
        let mut idx = CorpusIndex::new(grid(), 2);
        let (a, ra) = page("a", [[0.0, 1.0]; 4]);
        idx.insert(a.clone(), ra.clone()).unwrap();
        assert!(idx.insert(a.clone(), ra).is_err());
        let other =
            PageEmbedding::new("x", PatchGrid::new(1, 28).unwrap(), 2, vec![1.0, 0.0]).unwrap();
        assert!(idx.insert(other, PageRecord::empty("x", 1.0, 1.0)).is_err());
        let (b, _) = page("b", [[0.0, 1.0]; 4]);
        assert!(idx.insert(b, PageRecord::empty("c", 1.0, 1.0)).is_err());
    }
}
