//! `.emb` embedding binaries.
//!
//! Layout, all integers little-endian `u32`, all floats little-endian IEEE-754 `f32`:
//!
//! ```text
//! "SNPE"                 magic
//! version                currently 1
//! id_len, id             UTF-8 identifier
//! grid_side              G; 0 marks a query record
//! n_rows                 G*G for pages, n tokens for queries
//! dim                    d
//! n_rows * dim floats    row-major vectors
//! dim floats             pooled vector (pages only)
//! ```
//!
//! A query file may hold several records back to back.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use regionrank_core::embedding::NORM_TOLERANCE;
use regionrank_core::{PageEmbedding, PatchGrid, QueryEmbedding};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SNPE";
pub const FORMAT_VERSION: u32 = 1;

/// Largest accepted pooled-vs-mean gap.
pub const POOLED_TOLERANCE: f32 = 1e-6;

const MAX_ID_LEN: u32 = 1 << 16;

/// One decoded record, before it is turned into a page or query.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub grid_side: u32,
    pub dim: u32,
    pub rows: Vec<f32>,
    pub pooled: Option<Vec<f32>>,
}

impl EmbeddingRecord {
    pub fn n_rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.rows.len() / self.dim as usize
        }
    }

    pub fn is_query(&self) -> bool {
        self.grid_side == 0
    }

    pub fn from_page(page: &PageEmbedding) -> Self {
        Self {
            id: page.id().to_owned(),
            grid_side: page.grid().grid_side(),
            dim: page.dim() as u32,
            rows: page.patches().to_vec(),
            pooled: Some(page.pooled().to_vec()),
        }
    }

    pub fn from_query(query: &QueryEmbedding) -> Self {
        Self {
            id: query.id().to_owned(),
            grid_side: 0,
            dim: query.dim() as u32,
            rows: query.as_slice().to_vec(),
            pooled: None,
        }
    }
}

/// Non-fatal findings while loading embeddings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoadWarning {
    /// Rows whose norm was off by more than the tolerance and were rescaled.
    Renormalized { id: String, rows: usize },
    /// All-zero rows; their similarity to anything is 0.
    ZeroRows { id: String, rows: usize },
}

impl fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadWarning::Renormalized { id, rows } => write!(
                f,
                "{id}: {rows} row(s) had norm off by more than {NORM_TOLERANCE}; renormalized"
            ),
            LoadWarning::ZeroRows { id, rows } => {
                write!(f, "{id}: {rows} zero-norm row(s) will score 0")
            }
        }
    }
}

pub fn encode(rec: &EmbeddingRecord, out: &mut Vec<u8>) {
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(rec.id.len() as u32).to_le_bytes());
    out.extend_from_slice(rec.id.as_bytes());
    out.extend_from_slice(&rec.grid_side.to_le_bytes());
    out.extend_from_slice(&(rec.n_rows() as u32).to_le_bytes());
    out.extend_from_slice(&rec.dim.to_le_bytes());
    for v in rec.rows.iter().chain(rec.pooled.iter().flatten()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Truncated {
                path: self.path.to_owned(),
                what,
            });
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn floats(&mut self, count: u64, what: &'static str) -> Result<Vec<f32>> {
        let bytes = count
            .checked_mul(4)
            .and_then(|b| usize::try_from(b).ok())
            .ok_or_else(|| Error::Truncated {
                path: self.path.to_owned(),
                what,
            })?;
        Ok(self
            .take(bytes, what)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Decodes every record in `bytes`.
pub fn decode_all(bytes: &[u8], path: &Path) -> Result<Vec<EmbeddingRecord>> {
    let mut r = Reader { buf: bytes, path };
    let mut out = Vec::new();
    while !r.buf.is_empty() {
        out.push(decode_one(&mut r)?);
    }
    if out.is_empty() {
        return Err(Error::Truncated {
            path: path.to_owned(),
            what: "magic",
        });
    }
    Ok(out)
}

fn decode_one(r: &mut Reader<'_>) -> Result<EmbeddingRecord> {
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic {
            path: r.path.to_owned(),
            found: magic,
        });
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            path: r.path.to_owned(),
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let id_len = r.u32("id length")?;
    if id_len > MAX_ID_LEN {
        return Err(Error::Format {
            path: r.path.to_owned(),
            what: format!("id length {id_len} exceeds {MAX_ID_LEN}"),
        });
    }
    let id = std::str::from_utf8(r.take(id_len as usize, "id")?)
        .map_err(|_| Error::Format {
            path: r.path.to_owned(),
            what: "id is not valid UTF-8".into(),
        })?
        .to_owned();
    let grid_side = r.u32("grid side")?;
    let n_rows = r.u32("row count")?;
    let dim = r.u32("dimension")?;
    if dim == 0 {
        return Err(Error::Format {
            path: r.path.to_owned(),
            what: format!("record {id:?} has dimension 0"),
        });
    }
    if grid_side > 0 {
        let expected = grid_side as u64 * grid_side as u64;
        if n_rows as u64 != expected {
            return Err(Error::RowCount {
                path: r.path.to_owned(),
                id,
                rows: n_rows,
                grid: grid_side,
                expected,
            });
        }
    }
    let rows = r.floats(n_rows as u64 * dim as u64, "vectors")?;
    let pooled = if grid_side > 0 {
        Some(r.floats(dim as u64, "pooled vector")?)
    } else {
        None
    };
    Ok(EmbeddingRecord {
        id,
        grid_side,
        dim,
        rows,
        pooled,
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_page_embedding(path: &Path, page: &PageEmbedding) -> Result<()> {
    let mut buf = Vec::new();
    encode(&EmbeddingRecord::from_page(page), &mut buf);
    write_bytes(path, &buf)
}

/// Writes one or more query records into a single file.
pub fn write_query_embeddings<'a>(
    path: &Path,
    queries: impl IntoIterator<Item = &'a QueryEmbedding>,
) -> Result<()> {
    let mut buf = Vec::new();
    for q in queries {
        encode(&EmbeddingRecord::from_query(q), &mut buf);
    }
    write_bytes(path, &buf)
}

/// A page read from disk plus anything worth warning about.
#[derive(Debug, Clone)]
pub struct LoadedPage {
    pub page: PageEmbedding,
    pub warnings: Vec<LoadWarning>,
}

/// Turns a decoded page record into a validated [`PageEmbedding`].
pub fn page_from_record(rec: EmbeddingRecord, input_side: u32, path: &Path) -> Result<LoadedPage> {
    if rec.is_query() {
        return Err(Error::Format {
            path: path.to_owned(),
            what: format!("{:?} is a query record, expected a page", rec.id),
        });
    }
    let grid = PatchGrid::new(rec.grid_side, input_side)?;
    let pooled = rec.pooled.unwrap_or_default();
    let mut page = PageEmbedding::from_parts(rec.id, grid, rec.dim as usize, rec.rows, pooled)?;
    let dev = page.pooled_deviation();
    if dev > POOLED_TOLERANCE || dev.is_nan() {
        return Err(Error::PooledMismatch {
            path: path.to_owned(),
            id: page.id().to_owned(),
            max_deviation: dev,
        });
    }
    let mut warnings = Vec::new();
    let off = page.unnormalized_rows().len() - page.zero_rows();
    if off > 0 {
        page.normalize();
        warnings.push(LoadWarning::Renormalized {
            id: page.id().to_owned(),
            rows: off,
        });
    }
    if page.zero_rows() > 0 {
        warnings.push(LoadWarning::ZeroRows {
            id: page.id().to_owned(),
            rows: page.zero_rows(),
        });
    }
    for w in &warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(LoadedPage { page, warnings })
}

/// Reads a single-page `.emb` file. `input_side` is the model resolution `I`,
/// which the wire format does not carry.
pub fn read_page_embedding(path: &Path, input_side: u32) -> Result<LoadedPage> {
    let bytes = read_bytes(path)?;
    let mut recs = decode_all(&bytes, path)?;
    if recs.len() != 1 {
        return Err(Error::Format {
            path: path.to_owned(),
            what: format!("expected one page record, found {}", recs.len()),
        });
    }
    page_from_record(recs.pop().unwrap(), input_side, path)
}

/// Query embeddings keyed by id.
#[derive(Debug, Clone, Default)]
pub struct LoadedQueries {
    pub queries: BTreeMap<String, QueryEmbedding>,
    pub warnings: Vec<LoadWarning>,
}

/// Loads query embeddings from a file of concatenated records or from a
/// directory of `.emb` files.
pub fn load_query_embeddings(path: &Path) -> Result<LoadedQueries> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "emb"))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_owned()]
    };
    let mut out = LoadedQueries::default();
    for file in &files {
        for rec in decode_all(&read_bytes(file)?, file)? {
            if !rec.is_query() {
                return Err(Error::Format {
                    path: file.clone(),
                    what: format!("{:?} is a page record, expected a query", rec.id),
                });
            }
            let mut q = QueryEmbedding::new(rec.id, rec.dim as usize, rec.rows)?;
            let off = q.unnormalized_rows();
            let zero = q.rows().filter(|r| r.iter().all(|&v| v == 0.0)).count();
            if off.len() > zero {
                q.normalize();
                out.warnings.push(LoadWarning::Renormalized {
                    id: q.id().to_owned(),
                    rows: off.len() - zero,
                });
            }
            if zero > 0 {
                out.warnings.push(LoadWarning::ZeroRows {
                    id: q.id().to_owned(),
                    rows: zero,
                });
            }
            if out.queries.contains_key(q.id()) {
                return Err(Error::Duplicate {
                    path: file.clone(),
                    id: q.id().to_owned(),
                });
            }
            out.queries.insert(q.id().to_owned(), q);
        }
    }
    for w in &out.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(out)
}
