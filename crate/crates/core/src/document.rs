//! OCR page records and evaluation samples.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::BBox;

/// A text block found by OCR, in page pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OcrRegion {
    pub region_id: String,
    pub bbox: BBox,
    /// May be empty (figures).
    pub text: String,
}

/// OCR output for one page.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PageRecord {
    pub page_id: String,
    pub document_id: String,
    pub category: Option<String>,
    pub page_width: f64,
    pub page_height: f64,
    pub regions: Vec<OcrRegion>,
}

impl PageRecord {
    /// A page with no OCR regions.
    pub fn empty(page_id: impl Into<String>, page_width: f64, page_height: f64) -> Self {
        let page_id = page_id.into();
        Self {
            document_id: page_id.clone(),
            page_id,
            category: None,
            page_width,
            page_height,
            regions: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.page_width > 0.0 && self.page_width.is_finite()) {
            return Err(Error::NonPositive {
                what: "page width",
                value: self.page_width,
            });
        }
        if !(self.page_height > 0.0 && self.page_height.is_finite()) {
            return Err(Error::NonPositive {
                what: "page height",
                value: self.page_height,
            });
        }
        let mut seen = BTreeSet::new();
        for r in &self.regions {
            BBox::try_from(r.bbox.to_array())?;
            if !seen.insert(r.region_id.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate region id {:?} on page {:?}",
                    r.region_id, self.page_id
                )));
            }
        }
        Ok(())
    }

    pub fn page_area(&self) -> f64 {
        self.page_width * self.page_height
    }
}

/// One question with its ground-truth evidence boxes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalSample {
    pub sample_id: String,
    pub page_id: String,
    pub document_id: String,
    pub category: String,
    pub query_ref: String,
    pub gt_bboxes: Vec<BBox>,
    pub question_text: Option<String>,
}

impl EvalSample {
    pub fn validate(&self) -> Result<()> {
        if self.gt_bboxes.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "sample {:?} has no ground-truth boxes",
                self.sample_id
            )));
        }
        for b in &self.gt_bboxes {
            BBox::try_from(b.to_array())?;
        }
        Ok(())
    }
}
