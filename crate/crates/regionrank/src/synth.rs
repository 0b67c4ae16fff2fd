//! Seeded synthetic corpora with planted answers.
//!
//! Each page is split into horizontal bands, one OCR region per band. On a
//! planted page, the patches under one band's region point along a signal
//! axis shared with one query; every other patch on every page is nearly
//! orthogonal to it. Planted regions are patch-aligned in model space, so
//! the correct region has IoU exactly 1 with the ground-truth box.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regionrank_core::{
    BBox, CorpusIndex, EvalSample, OcrRegion, PageEmbedding, PageRecord, PatchGrid, QueryEmbedding,
};

use crate::emb::{write_page_embedding, write_query_embeddings};
use crate::error::{Error, Result};
use crate::records::{write_eval_samples, write_regions};

/// Patch score inside a planted region.
pub const SIGNAL: f32 = 0.9;
/// Patch score elsewhere on a planted page.
pub const BACKGROUND: f32 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub pages: usize,
    /// Number of planted pages (one query and one sample each).
    pub planted: usize,
    pub grid: PatchGrid,
    pub dim: usize,
    pub query_tokens: usize,
    /// Page size in pixels. Multiples of the input side keep planted boxes patch-aligned.
    pub page_width: f64,
    pub page_height: f64,
    /// Regions per page; must divide into bands at least three patches tall.
    pub bands: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            pages: 12,
            planted: 1,
            grid: PatchGrid::COLPALI,
            dim: 32,
            query_tokens: 4,
            page_width: 896.0,
            page_height: 1344.0,
            bands: 4,
            seed: 0,
        }
    }
}

/// Where an answer was planted.
#[derive(Debug, Clone, PartialEq)]
pub struct Planted {
    pub query_id: String,
    pub page_id: String,
    pub region_id: String,
    /// Raster indices of the signal patches.
    pub patches: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub grid: PatchGrid,
    pub dim: usize,
    pub pages: Vec<PageEmbedding>,
    pub records: Vec<PageRecord>,
    pub queries: Vec<QueryEmbedding>,
    pub samples: Vec<EvalSample>,
    pub planted: Vec<Planted>,
}

fn unit_noise(rng: &mut ChaCha8Rng, dim: usize, from: usize) -> Vec<f32> {
    loop {
        let mut v = vec![0.0f32; dim];
        for x in &mut v[from..] {
            *x = rng.gen_range(-1.0..1.0);
        }
        let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if n > 1e-3 {
            v.iter_mut().for_each(|x| *x /= n);
            return v;
        }
    }
}

fn normalize(v: &mut [f32]) {
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

impl SyntheticCorpus {
    pub fn generate(spec: &SynthSpec) -> Result<Self> {
        let g = spec.grid.grid_side() as usize;
        let noise_from = spec.planted + spec.query_tokens;
        if spec.pages == 0 || spec.planted > spec.pages {
            return Err(Error::Config("need pages >= planted and pages >= 1".into()));
        }
        if spec.bands == 0 || g / spec.bands < 3 {
            return Err(Error::Config(format!(
                "grid side {g} is too small for {} bands",
                spec.bands
            )));
        }
        if spec.dim < noise_from + 2 {
            return Err(Error::Config(format!(
                "dim must be at least {} for {} planted pages and {} query tokens",
                noise_from + 2,
                spec.planted,
                spec.query_tokens
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let band_rows = g / spec.bands;
        let sx = spec.page_width / spec.grid.input_side() as f64;
        let sy = spec.page_height / spec.grid.input_side() as f64;
        let s = spec.grid.patch_side() as f64;

        let mut page_order: Vec<usize> = (0..spec.pages).collect();
        page_order.shuffle(&mut rng);
        let planted_pages: BTreeMap<usize, usize> = page_order[..spec.planted]
            .iter()
            .enumerate()
            .map(|(axis, &p)| (p, axis))
            .collect();

        let mut out = SyntheticCorpus {
            grid: spec.grid,
            dim: spec.dim,
            pages: Vec::new(),
            records: Vec::new(),
            queries: Vec::new(),
            samples: Vec::new(),
            planted: Vec::new(),
        };
        let mut planted_by_axis = vec![None; spec.planted];

        for p in 0..spec.pages {
            let page_id = format!("page-{p:04}");
            let planted = planted_pages
                .get(&p)
                .map(|&axis| (axis, rng.gen_range(0..spec.bands)));
            let mut record = PageRecord::empty(page_id.clone(), spec.page_width, spec.page_height);
            record.document_id = format!("doc-{:03}", p / 3);
            let mut planted_patches = Vec::new();

            for b in 0..spec.bands {
                let (r0, r1) = (b * band_rows + 1, (b + 1) * band_rows - 1);
                let is_planted = planted.is_some_and(|(_, pb)| pb == b);
                // planted boxes sit on patch edges; others are nudged off-grid
                let jitter = if is_planted {
                    0.0
                } else {
                    rng.gen_range(0.1..0.6) * s
                };
                let (c0, c1) = if is_planted {
                    (1, g - 1)
                } else {
                    let c0 = rng.gen_range(0..g / 2);
                    (c0, rng.gen_range(c0 + 2..=g - 1))
                };
                let bbox = BBox::new(
                    (c0 as f64 * s + jitter) * sx,
                    r0 as f64 * s * sy,
                    (c1 as f64 * s) * sx,
                    r1 as f64 * s * sy,
                )?;
                let region_id = format!("r{b}");
                let text = if is_planted {
                    format!("planted answer on {page_id}: the figure you are looking for is 42")
                } else {
                    format!("{page_id} band {b}: unrelated filler text about nothing in particular")
                };
                if is_planted {
                    for row in r0..r1 {
                        for col in c0..c1 {
                            planted_patches.push(row * g + col);
                        }
                    }
                    let (axis, _) = planted.unwrap();
                    planted_by_axis[axis] = Some(Planted {
                        query_id: format!("q-{axis:03}"),
                        page_id: page_id.clone(),
                        region_id: region_id.clone(),
                        patches: Vec::new(),
                    });
                }
                record.regions.push(OcrRegion {
                    region_id,
                    bbox,
                    text,
                });
            }

            let mut data = Vec::with_capacity(g * g * spec.dim);
            for k in 0..g * g {
                let mut v = unit_noise(&mut rng, spec.dim, noise_from);
                match planted {
                    Some((axis, _)) => {
                        let c = if planted_patches.contains(&k) {
                            SIGNAL
                        } else {
                            BACKGROUND
                        };
                        let rest = (1.0 - c * c).sqrt();
                        v.iter_mut().for_each(|x| *x *= rest);
                        v[axis] = c;
                    }
                    None => {
                        let mut v2 = v.clone();
                        for x in &mut v2[..spec.planted] {
                            *x = rng.gen_range(-BACKGROUND..BACKGROUND);
                        }
                        normalize(&mut v2);
                        v = v2;
                    }
                }
                data.extend_from_slice(&v);
            }
            if let Some((axis, _)) = planted {
                if let Some(pl) = planted_by_axis[axis].as_mut() {
                    pl.patches = planted_patches;
                }
            }
            out.pages
                .push(PageEmbedding::new(page_id, spec.grid, spec.dim, data)?);
            out.records.push(record);
        }

        for (axis, pl) in planted_by_axis.into_iter().enumerate() {
            let pl = pl.expect("every axis planted");
            let angle: f32 = 0.3;
            let mut q = Vec::with_capacity(spec.query_tokens * spec.dim);
            for t in 0..spec.query_tokens {
                let mut v = vec![0.0f32; spec.dim];
                v[axis] = angle.cos();
                v[spec.planted + t] = angle.sin();
                q.extend_from_slice(&v);
            }
            out.queries
                .push(QueryEmbedding::new(pl.query_id.clone(), spec.dim, q)?);
            let record = out
                .records
                .iter()
                .find(|r| r.page_id == pl.page_id)
                .unwrap();
            let region = record
                .regions
                .iter()
                .find(|r| r.region_id == pl.region_id)
                .unwrap();
            out.samples.push(EvalSample {
                sample_id: format!("s-{axis:03}"),
                page_id: pl.page_id.clone(),
                document_id: record.document_id.clone(),
                category: ["text", "table", "figure"][axis % 3].to_string(),
                query_ref: pl.query_id.clone(),
                gt_bboxes: vec![region.bbox],
                question_text: Some("where is the planted answer?".into()),
            });
            out.planted.push(pl);
        }
        Ok(out)
    }

    pub fn index(&self) -> Result<CorpusIndex> {
        let mut idx = CorpusIndex::new(self.grid, self.dim);
        for (p, r) in self.pages.iter().zip(&self.records) {
            idx.insert(p.clone(), r.clone())?;
        }
        Ok(idx)
    }

    pub fn query_map(&self) -> BTreeMap<String, QueryEmbedding> {
        self.queries
            .iter()
            .map(|q| (q.id().to_string(), q.clone()))
            .collect()
    }

    /// Writes `embeddings/<page>.emb`, `regions.jsonl`, `queries.emb` and
    /// `samples.jsonl` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let emb = dir.join("embeddings");
        fs::create_dir_all(&emb).map_err(|e| Error::io(&emb, e))?;
        for p in &self.pages {
            write_page_embedding(&emb.join(format!("{}.emb", p.id())), p)?;
        }
        write_regions(&dir.join("regions.jsonl"), &self.records)?;
        write_query_embeddings(&dir.join("queries.emb"), self.queries.iter())?;
        write_eval_samples(&dir.join("samples.jsonl"), &self.samples)
    }
}
