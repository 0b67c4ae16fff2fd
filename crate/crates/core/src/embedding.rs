//! Query and page multivectors.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::PatchGrid;

/// Row norms further than this from 1 count as un-normalized.
pub const NORM_TOLERANCE: f32 = 1e-3;

/// Query token vectors, `n` rows of dimension `d`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbedding {
    id: String,
    dim: usize,
    data: Vec<f32>,
}

impl QueryEmbedding {
    pub fn new(id: impl Into<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        let id = id.into();
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch {
                expected: dim.max(1) * (data.len() / dim.max(1)).max(1),
                actual: data.len(),
                id,
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { id });
        }
        Ok(Self { id, dim, data })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Token count `n`.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Mean of token vectors, unit-normalized. Zero mean stays zero.
    pub fn pooled_unit(&self) -> Vec<f32> {
        let mut pooled = mean_rows(&self.data, self.dim);
        let norm = libm::sqrtf(dot(&pooled, &pooled));
        if norm > 0.0 {
            pooled.iter_mut().for_each(|v| *v /= norm);
        }
        pooled
    }

    /// Indices of rows whose norm is off by more than [`NORM_TOLERANCE`].
    pub fn unnormalized_rows(&self) -> Vec<usize> {
        unnormalized(&self.data, self.dim)
    }

    /// Rescales every non-zero row to unit norm.
    pub fn normalize(&mut self) {
        normalize_rows(&mut self.data, self.dim);
    }
}

/// Patch multivectors for one page plus their mean-pooled vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PageEmbedding {
    id: String,
    grid: PatchGrid,
    dim: usize,
    patches: Vec<f32>,
    pooled: Vec<f32>,
    inv_norms: Vec<f32>,
}

impl PageEmbedding {
    /// Builds a page embedding and computes the pooled vector.
    pub fn new(
        id: impl Into<String>,
        grid: PatchGrid,
        dim: usize,
        patches: Vec<f32>,
    ) -> Result<Self> {
        let id = id.into();
        check_patch_shape(&id, grid, dim, &patches)?;
        let pooled = mean_rows(&patches, dim);
        let inv_norms = inverse_norms(&patches, dim);
        Ok(Self {
            id,
            grid,
            dim,
            patches,
            pooled,
            inv_norms,
        })
    }

    /// Builds a page embedding from stored parts. The pooled vector is kept
    /// as given; check it with [`PageEmbedding::pooled_deviation`].
    pub fn from_parts(
        id: impl Into<String>,
        grid: PatchGrid,
        dim: usize,
        patches: Vec<f32>,
        pooled: Vec<f32>,
    ) -> Result<Self> {
        let id = id.into();
        check_patch_shape(&id, grid, dim, &patches)?;
        if pooled.len() != dim {
            return Err(Error::ShapeMismatch {
                id,
                expected: dim,
                actual: pooled.len(),
            });
        }
        if pooled.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { id });
        }
        let inv_norms = inverse_norms(&patches, dim);
        Ok(Self {
            id,
            grid,
            dim,
            patches,
            pooled,
            inv_norms,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn grid(&self) -> PatchGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Patch count `m = G^2`.
    pub fn len(&self) -> usize {
        self.grid.patch_count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn patch(&self, j: usize) -> &[f32] {
        &self.patches[j * self.dim..(j + 1) * self.dim]
    }

    pub fn patches(&self) -> &[f32] {
        &self.patches
    }

    pub fn pooled(&self) -> &[f32] {
        &self.pooled
    }

    pub(crate) fn inv_norms(&self) -> &[f32] {
        &self.inv_norms
    }

    /// Largest absolute gap between the stored pooled vector and the mean of
    /// the patch rows.
    pub fn pooled_deviation(&self) -> f32 {
        mean_rows(&self.patches, self.dim)
            .iter()
            .zip(&self.pooled)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    pub fn unnormalized_rows(&self) -> Vec<usize> {
        unnormalized(&self.patches, self.dim)
    }

    /// Rescales every non-zero patch row to unit norm and recomputes pooled.
    pub fn normalize(&mut self) {
        normalize_rows(&mut self.patches, self.dim);
        self.pooled = mean_rows(&self.patches, self.dim);
        self.inv_norms = inverse_norms(&self.patches, self.dim);
    }

    /// Count of all-zero patch rows.
    pub fn zero_rows(&self) -> usize {
        self.inv_norms.iter().filter(|&&v| v == 0.0).count()
    }
}

fn check_patch_shape(id: &str, grid: PatchGrid, dim: usize, patches: &[f32]) -> Result<()> {
    let expected = grid.patch_count() * dim;
    if dim == 0 || patches.len() != expected {
        return Err(Error::ShapeMismatch {
            id: id.into(),
            expected,
            actual: patches.len(),
        });
    }
    if patches.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { id: id.into() });
    }
    Ok(())
}

/// Column means accumulated in f64.
pub(crate) fn mean_rows(data: &[f32], dim: usize) -> Vec<f32> {
    let mut acc = vec![0f64; dim];
    let mut n = 0usize;
    for row in data.chunks_exact(dim) {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v as f64;
        }
        n += 1;
    }
    let n = n.max(1) as f64;
    acc.into_iter().map(|a| (a / n) as f32).collect()
}

fn inverse_norms(data: &[f32], dim: usize) -> Vec<f32> {
    data.chunks_exact(dim)
        .map(|row| {
            let n = libm::sqrtf(dot(row, row));
            if n > 0.0 {
                1.0 / n
            } else {
                0.0
            }
        })
        .collect()
}

fn unnormalized(data: &[f32], dim: usize) -> Vec<usize> {
    data.chunks_exact(dim)
        .enumerate()
        .filter(|(_, row)| (libm::sqrtf(dot(row, row)) - 1.0).abs() > NORM_TOLERANCE)
        .map(|(i, _)| i)
        .collect()
}

fn normalize_rows(data: &mut [f32], dim: usize) {
    for row in data.chunks_exact_mut(dim) {
        let n = libm::sqrtf(dot(row, row));
        if n > 0.0 {
            row.iter_mut().for_each(|v| *v /= n);
        }
    }
}

/// Dot product with eight independent accumulators.
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = 0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    acc.iter().sum::<f32>() + tail
}
