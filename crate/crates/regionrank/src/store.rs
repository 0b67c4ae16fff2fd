//! On-disk index directory.
//!
//! ```text
//! <index>/manifest.json       corpus metadata
//! <index>/pages/<id>.emb      one page embedding per page
//! <index>/regions.jsonl       OCR records, one line per page
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use regionrank_core::{CorpusIndex, PageEmbedding, PageRecord, PatchGrid};
use serde::{Deserialize, Serialize};

use crate::emb::{read_page_embedding, write_page_embedding, LoadWarning};
use crate::error::{Error, Result};
use crate::records::{load_regions, write_regions};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REGIONS_FILE: &str = "regions.jsonl";
pub const PAGES_DIR: &str = "pages";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub grid_side: u32,
    pub input_side: u32,
    pub dim: usize,
    /// Page count `N`.
    pub pages: usize,
    pub regions: usize,
    pub page_ids: Vec<String>,
}

/// What `build_index` did, including non-fatal findings.
#[derive(Debug, Clone)]
pub struct BuildSummary {
    pub manifest: Manifest,
    /// Region records whose page has no embedding.
    pub orphan_region_pages: Vec<String>,
    /// Pages indexed with no OCR record.
    pub pages_without_regions: Vec<String>,
    pub warnings: Vec<LoadWarning>,
}

fn check_page_id(id: &str) -> Result<()> {
    let bad = id.is_empty() || id == "." || id == ".." || id.contains(['/', '\\', '\0']);
    if bad {
        return Err(Error::Config(format!(
            "page id {id:?} is not usable as a file name"
        )));
    }
    Ok(())
}

fn emb_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "emb"))
        .collect();
    files.sort();
    Ok(files)
}

/// Builds an index directory from a directory of page `.emb` files and a
/// regions file. All pages must share `G` and `d`.
pub fn build_index(
    embeddings_dir: &Path,
    regions_path: &Path,
    out_dir: &Path,
    input_side: u32,
) -> Result<BuildSummary> {
    let files = emb_files(embeddings_dir)?;
    if files.is_empty() {
        return Err(Error::Config(format!(
            "no .emb files in {}",
            embeddings_dir.display()
        )));
    }
    let mut pages: Vec<PageEmbedding> = Vec::with_capacity(files.len());
    let mut warnings = Vec::new();
    for f in &files {
        let loaded = read_page_embedding(f, input_side)?;
        if let Some(first) = pages.first() {
            if loaded.page.dim() != first.dim() || loaded.page.grid() != first.grid() {
                return Err(Error::Format {
                    path: f.clone(),
                    what: format!(
                        "page {:?} has G={}, d={}; corpus has G={}, d={}",
                        loaded.page.id(),
                        loaded.page.grid().grid_side(),
                        loaded.page.dim(),
                        first.grid().grid_side(),
                        first.dim()
                    ),
                });
            }
        }
        check_page_id(loaded.page.id())?;
        warnings.extend(loaded.warnings);
        pages.push(loaded.page);
    }

    let mut records: BTreeMap<String, PageRecord> = load_regions(regions_path)?
        .into_iter()
        .map(|r| (r.page_id.clone(), r))
        .collect();

    let grid = pages[0].grid();
    let dim = pages[0].dim();
    let mut index = CorpusIndex::new(grid, dim);
    let mut ordered_records = Vec::with_capacity(pages.len());
    let mut pages_without_regions = Vec::new();
    let pages_dir = out_dir.join(PAGES_DIR);
    fs::create_dir_all(&pages_dir).map_err(|e| Error::io(&pages_dir, e))?;

    for page in pages {
        let record = match records.remove(page.id()) {
            Some(r) => r,
            None => {
                log::warn!(
                    "page {:?} has no OCR record; indexed without regions",
                    page.id()
                );
                pages_without_regions.push(page.id().to_owned());
                let side = grid.input_side() as f64;
                PageRecord::empty(page.id(), side, side)
            }
        };
        write_page_embedding(&pages_dir.join(format!("{}.emb", page.id())), &page)?;
        ordered_records.push(record.clone());
        index.insert(page, record)?;
    }
    let orphan_region_pages: Vec<String> = records.into_keys().collect();
    for id in &orphan_region_pages {
        log::warn!("regions reference unknown page {id:?}; skipped");
    }
    write_regions(&out_dir.join(REGIONS_FILE), &ordered_records)?;

    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        grid_side: grid.grid_side(),
        input_side: grid.input_side(),
        dim,
        pages: index.len(),
        regions: index.region_count(),
        page_ids: index.page_ids().map(str::to_owned).collect(),
    };
    let path = out_dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;

    Ok(BuildSummary {
        manifest,
        orphan_region_pages,
        pages_without_regions,
        warnings,
    })
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.clone(),
        what: e.to_string(),
    })?;
    if m.format_version != MANIFEST_VERSION {
        return Err(Error::Version {
            path,
            found: m.format_version,
            expected: MANIFEST_VERSION,
        });
    }
    Ok(m)
}

/// A loaded index plus pages that could not be loaded.
#[derive(Debug)]
pub struct LoadedIndex {
    pub index: CorpusIndex,
    pub manifest: Manifest,
    /// Listed in the manifest but with no readable `.emb` file.
    pub missing_pages: Vec<String>,
}

/// Loads an index directory. A page listed in the manifest whose `.emb`
/// file is absent is reported in `missing_pages`; any other load failure is
/// fatal.
pub fn load_index(dir: &Path) -> Result<LoadedIndex> {
    let manifest = read_manifest(dir)?;
    let grid = PatchGrid::new(manifest.grid_side, manifest.input_side)?;
    let mut records: BTreeMap<String, PageRecord> = load_regions(&dir.join(REGIONS_FILE))?
        .into_iter()
        .map(|r| (r.page_id.clone(), r))
        .collect();
    let mut index = CorpusIndex::new(grid, manifest.dim);
    let mut missing_pages = Vec::new();
    for id in &manifest.page_ids {
        check_page_id(id)?;
        let path = dir.join(PAGES_DIR).join(format!("{id}.emb"));
        if !path.exists() {
            log::warn!("{}: missing page file", path.display());
            missing_pages.push(id.clone());
            continue;
        }
        let page = read_page_embedding(&path, manifest.input_side)?.page;
        if page.id() != id {
            return Err(Error::Format {
                path,
                what: format!("file holds page {:?}, manifest expects {id:?}", page.id()),
            });
        }
        let side = manifest.input_side as f64;
        let record = records
            .remove(id)
            .unwrap_or_else(|| PageRecord::empty(id.as_str(), side, side));
        index.insert(page, record)?;
    }
    Ok(LoadedIndex {
        index,
        manifest,
        missing_pages,
    })
}
