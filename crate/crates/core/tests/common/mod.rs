#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use regionrank_core::{BBox, OcrRegion, PageEmbedding, PageRecord, PatchGrid, QueryEmbedding};

pub fn unit_rows(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(rows * dim);
    for _ in 0..rows {
        let mut v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f32>().sqrt().max(1e-6);
        v.iter_mut().for_each(|x| *x /= n);
        out.extend(v);
    }
    out
}

pub fn random_query(rng: &mut ChaCha8Rng, id: &str, dim: usize) -> QueryEmbedding {
    let n = rng.gen_range(1..8);
    QueryEmbedding::new(id, dim, unit_rows(rng, n, dim)).unwrap()
}

pub fn random_page(rng: &mut ChaCha8Rng, id: &str, grid: PatchGrid, dim: usize) -> PageEmbedding {
    PageEmbedding::new(id, grid, dim, unit_rows(rng, grid.patch_count(), dim)).unwrap()
}

/// Box with corners anywhere in `[0, w] x [0, h]`, at least one pixel on each side.
pub fn random_box(rng: &mut ChaCha8Rng, w: f64, h: f64) -> BBox {
    let (a, b) = (rng.gen_range(0.0..w), rng.gen_range(0.0..w));
    let (c, d) = (rng.gen_range(0.0..h), rng.gen_range(0.0..h));
    let (x1, x2) = (a.min(b), a.max(b).max(a.min(b) + 1.0).min(w));
    let (y1, y2) = (c.min(d), c.max(d).max(c.min(d) + 1.0).min(h));
    BBox::new(x1, y1, x2, y2).unwrap()
}

pub fn random_record(rng: &mut ChaCha8Rng, id: &str, regions: usize) -> PageRecord {
    let w = rng.gen_range(200.0..1600.0);
    let h = rng.gen_range(200.0..1600.0);
    let mut rec = PageRecord::empty(id, w, h);
    rec.document_id = format!("doc-{id}");
    for i in 0..regions {
        rec.regions.push(OcrRegion {
            region_id: format!("r{i}"),
            bbox: random_box(rng, w, h),
            text: "x".repeat(rng.gen_range(0..40)),
        });
    }
    rec
}

/// Exhaustive reference for a patch box: column `k % g`, row `k / g`.
pub fn oracle_patch(k: usize, grid: PatchGrid) -> [f64; 4] {
    let g = grid.grid_side() as usize;
    let s = grid.patch_side() as f64;
    let (r, c) = ((k / g) as f64, (k % g) as f64);
    [c * s, r * s, c * s + s, r * s + s]
}

pub fn oracle_intersection(a: [f64; 4], b: &BBox) -> f64 {
    let w = (a[2].min(b.x2) - a[0].max(b.x1)).max(0.0);
    let h = (a[3].min(b.y2) - a[1].max(b.y1)).max(0.0);
    w * h
}
