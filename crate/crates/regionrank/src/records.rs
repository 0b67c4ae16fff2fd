//! Line-delimited JSON records: `regions.jsonl` and `samples.jsonl`.
//!
//! Unknown keys are ignored. Bounding boxes are `[x1, y1, x2, y2]` in page pixels.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use regionrank_core::{BBox, EvalSample, OcrRegion, PageRecord};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct RegionLine {
    id: String,
    bbox: [f64; 4],
    #[serde(default)]
    text: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct PageLine {
    page_id: String,
    document_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<String>,
    page_width: f64,
    page_height: f64,
    regions: Vec<RegionLine>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleLine {
    sample_id: String,
    page_id: String,
    document_id: String,
    category: String,
    query_ref: String,
    gt_bboxes: Vec<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    question_text: Option<String>,
}

fn record_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Record {
        path: path.to_owned(),
        line,
        message: message.into(),
    }
}

fn parse_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(line).map_err(|e| record_err(path, i + 1, e.to_string()))?;
        out.push((i + 1, v));
    }
    Ok(out)
}

fn bbox(path: &Path, line: usize, v: [f64; 4]) -> Result<BBox> {
    BBox::try_from(v).map_err(|e| record_err(path, line, e.to_string()))
}

/// Parses a regions file into page records.
pub fn load_regions(path: &Path) -> Result<Vec<PageRecord>> {
    let mut seen = BTreeSet::new();
    let mut pages = Vec::new();
    for (line, p) in parse_lines::<PageLine>(path)? {
        if !seen.insert(p.page_id.clone()) {
            return Err(Error::Duplicate {
                path: path.to_owned(),
                id: p.page_id,
            });
        }
        let regions = p
            .regions
            .into_iter()
            .map(|r| {
                Ok(OcrRegion {
                    region_id: r.id,
                    bbox: bbox(path, line, r.bbox)?,
                    text: r.text,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let rec = PageRecord {
            page_id: p.page_id,
            document_id: p.document_id,
            category: p.category,
            page_width: p.page_width,
            page_height: p.page_height,
            regions,
        };
        rec.validate()
            .map_err(|e| record_err(path, line, e.to_string()))?;
        pages.push(rec);
    }
    Ok(pages)
}

/// Parses an evaluation sample file.
pub fn load_eval_samples(path: &Path) -> Result<Vec<EvalSample>> {
    let mut seen = BTreeSet::new();
    let mut samples = Vec::new();
    for (line, s) in parse_lines::<SampleLine>(path)? {
        if !seen.insert(s.sample_id.clone()) {
            return Err(Error::Duplicate {
                path: path.to_owned(),
                id: s.sample_id,
            });
        }
        let sample = EvalSample {
            gt_bboxes: s
                .gt_bboxes
                .into_iter()
                .map(|b| bbox(path, line, b))
                .collect::<Result<_>>()?,
            sample_id: s.sample_id,
            page_id: s.page_id,
            document_id: s.document_id,
            category: s.category,
            query_ref: s.query_ref,
            question_text: s.question_text,
        };
        sample
            .validate()
            .map_err(|e| record_err(path, line, e.to_string()))?;
        samples.push(sample);
    }
    Ok(samples)
}

fn write_lines<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for item in items {
        let line = serde_json::to_string(&item).expect("records serialize");
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}

pub fn write_regions(path: &Path, pages: &[PageRecord]) -> Result<()> {
    write_lines(
        path,
        pages.iter().map(|p| PageLine {
            page_id: p.page_id.clone(),
            document_id: p.document_id.clone(),
            category: p.category.clone(),
            page_width: p.page_width,
            page_height: p.page_height,
            regions: p
                .regions
                .iter()
                .map(|r| RegionLine {
                    id: r.region_id.clone(),
                    bbox: r.bbox.to_array(),
                    text: r.text.clone(),
                })
                .collect(),
        }),
    )
}

pub fn write_eval_samples(path: &Path, samples: &[EvalSample]) -> Result<()> {
    write_lines(
        path,
        samples.iter().map(|s| SampleLine {
            sample_id: s.sample_id.clone(),
            page_id: s.page_id.clone(),
            document_id: s.document_id.clone(),
            category: s.category.clone(),
            query_ref: s.query_ref.clone(),
            gt_bboxes: s.gt_bboxes.iter().map(BBox::to_array).collect(),
            question_text: s.question_text.clone(),
        }),
    )
}

/// Writes any serializable records as JSON lines.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_lines(path, items)
}
