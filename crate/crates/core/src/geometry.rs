//! Coordinate-space math between OCR page pixels and the model's patch grid.
//!
//! The model sees an `I x I` input square tiled by a `G x G` grid of
//! `s x s` patches (`s = I / G`), indexed in raster order. OCR boxes live in
//! page pixels `(W, H)` and are scaled into the model square before they are
//! intersected with patches.
//!
//! Coordinates stay `f64` throughout. Nothing here rounds.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Patch geometry of a late-interaction vision encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PatchGrid {
    grid_side: u32,
    input_side: u32,
}

impl PatchGrid {
    /// 32 x 32 patches over a 448 px input (14 px patches).
    pub const COLPALI: PatchGrid = PatchGrid {
        grid_side: 32,
        input_side: 448,
    };

    pub fn new(grid_side: u32, input_side: u32) -> Result<Self> {
        if grid_side == 0 || input_side == 0 || !input_side.is_multiple_of(grid_side) {
            return Err(Error::InvalidGrid {
                grid_side,
                input_side,
            });
        }
        Ok(Self {
            grid_side,
            input_side,
        })
    }

    /// Patches per axis (`G`).
    pub fn grid_side(&self) -> u32 {
        self.grid_side
    }

    /// Model input resolution in pixels (`I`).
    pub fn input_side(&self) -> u32 {
        self.input_side
    }

    /// Patch edge length in pixels (`s = I / G`).
    pub fn patch_side(&self) -> u32 {
        self.input_side / self.grid_side
    }

    /// Total patch count (`G^2`).
    pub fn patch_count(&self) -> usize {
        (self.grid_side as usize) * (self.grid_side as usize)
    }
}

impl Default for PatchGrid {
    fn default() -> Self {
        Self::COLPALI
    }
}

/// Axis-aligned box `(x1, y1, x2, y2)` in pixels, `x1 <= x2`, `y1 <= y2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    /// Validating constructor: finite, non-negative, ordered corners.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let finite = x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite();
        if !finite || x1 < 0.0 || y1 < 0.0 || x1 > x2 || y1 > y2 {
            return Err(Error::InvalidBBox { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Zero-area boxes are legal but never intersect anything.
    pub fn is_degenerate(&self) -> bool {
        !(self.x2 > self.x1 && self.y2 > self.y1)
    }

    /// Area of the overlap with `other`, 0 when they only touch or are disjoint.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for BBox {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for BBox {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let v = <[f64; 4]>::deserialize(d)?;
        BBox::try_from(v).map_err(serde::de::Error::custom)
    }
}

/// Pixel box of patch `k` in model space.
pub fn patch_bbox(k: usize, grid: PatchGrid) -> Result<BBox> {
    let count = grid.patch_count();
    if k >= count {
        return Err(Error::PatchIndexOutOfRange { index: k, count });
    }
    Ok(patch_bbox_unchecked(k, grid))
}

#[inline]
fn patch_bbox_unchecked(k: usize, grid: PatchGrid) -> BBox {
    let g = grid.grid_side as usize;
    let s = grid.patch_side() as f64;
    let (row, col) = (k / g, k % g);
    BBox {
        x1: col as f64 * s,
        y1: row as f64 * s,
        x2: (col + 1) as f64 * s,
        y2: (row + 1) as f64 * s,
    }
}

/// Maps a page-space box of a `page_w x page_h` page into the model square,
/// clamping the result to `[0, I]` on both axes.
pub fn scale_bbox(b: &BBox, page_w: f64, page_h: f64, grid: PatchGrid) -> Result<BBox> {
    if !(page_w > 0.0 && page_w.is_finite()) {
        return Err(Error::NonPositive {
            what: "page width",
            value: page_w,
        });
    }
    if !(page_h > 0.0 && page_h.is_finite()) {
        return Err(Error::NonPositive {
            what: "page height",
            value: page_h,
        });
    }
    let side = grid.input_side as f64;
    let sx = |x: f64| (x * side / page_w).clamp(0.0, side);
    let sy = |y: f64| (y * side / page_h).clamp(0.0, side);
    Ok(BBox {
        x1: sx(b.x1),
        y1: sy(b.y1),
        x2: sx(b.x2),
        y2: sy(b.y2),
    })
}

/// Intersection over union. Two zero-area boxes give 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// One patch that overlaps a region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchCoverage {
    pub patch_index: usize,
    /// Fraction of the patch's own area inside the region.
    pub overlap_fraction: f64,
    /// IoU between the patch box and the region box.
    pub iou: f64,
}

/// Patches with positive intersection with `region` whose overlap fraction
/// is at least `min_overlap`, in raster order.
///
/// Only the row/column span under the region is visited. The span is padded
/// by one patch on each side so float rounding in `x / s` can never drop a
/// sliver intersection; padded patches fail the `> 0` test and are skipped.
pub fn covered(region: &BBox, grid: PatchGrid, min_overlap: f64) -> Vec<PatchCoverage> {
    let mut out = Vec::new();
    if region.is_degenerate() {
        return out;
    }
    let g = grid.grid_side as usize;
    let s = grid.patch_side() as f64;
    let patch_area = s * s;
    let region_area = region.area();

    let span = |lo: f64, hi: f64| {
        let first = libm::floor(lo / s) as i64 - 1;
        let last = libm::ceil(hi / s) as i64 + 1;
        (first.max(0) as usize, (last.max(0) as usize).min(g))
    };
    let (c0, c1) = span(region.x1, region.x2);
    let (r0, r1) = span(region.y1, region.y2);

    for row in r0..r1 {
        for col in c0..c1 {
            let k = row * g + col;
            let patch = patch_bbox_unchecked(k, grid);
            let inter = patch.intersection_area(region);
            if inter <= 0.0 {
                continue;
            }
            let overlap_fraction = inter / patch_area;
            if overlap_fraction < min_overlap {
                continue;
            }
            out.push(PatchCoverage {
                patch_index: k,
                overlap_fraction,
                iou: inter / (patch_area + region_area - inter),
            });
        }
    }
    out
}

/// Closed-form area-efficiency figure `w*h / ((w+s)*(h+s))` for a `w x h`
/// region on a grid of `s`-pixel patches.
///
/// This is the efficiency of a region whose top-left corner sits on a patch
/// corner and whose far edges spill into one partial patch per axis. A region
/// misaligned on both sides of an axis can spill into two partial patches,
/// so the strict worst case is [`worst_case_area_efficiency`].
pub fn area_efficiency_bound(w: f64, h: f64, s: f64) -> Result<f64> {
    check_positive("region width", w)?;
    check_positive("region height", h)?;
    check_positive("patch side", s)?;
    Ok((w * h) / ((w + s) * (h + s)))
}

/// Infimum of achieved efficiency over all placements: `w*h / ((w+2s)*(h+2s))`.
pub fn worst_case_area_efficiency(w: f64, h: f64, s: f64) -> Result<f64> {
    check_positive("region width", w)?;
    check_positive("region height", h)?;
    check_positive("patch side", s)?;
    Ok((w * h) / ((w + 2.0 * s) * (h + 2.0 * s)))
}

/// Region area divided by the total area of the patches it touches.
///
/// Returns `None` for degenerate regions.
pub fn achieved_area_efficiency(region: &BBox, grid: PatchGrid) -> Option<f64> {
    let cover = covered(region, grid, 0.0);
    if cover.is_empty() {
        return None;
    }
    let s = grid.patch_side() as f64;
    Some(region.area() / (cover.len() as f64 * s * s))
}

fn check_positive(what: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositive { what, value })
    }
}
