//! Region-level document retrieval by propagating late-interaction patch
//! similarities onto OCR bounding boxes.
//!
//! A ColPali-style encoder produces one embedding per `s x s` patch of a
//! `G x G` grid. For a query, each patch gets a relevance score (its best
//! cosine similarity to any query token). OCR regions are scaled into the
//! model square, intersected with the grid, and scored by aggregating the
//! scores of the patches they cover. The highest-scoring regions are what a
//! RAG pipeline hands to the language model instead of the whole page.
//!
//! This crate is `no_std` + `alloc` and does no IO. The `regionrank` crate
//! adds wire formats, index persistence, reporting and the CLI.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod document;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod index;
pub mod scoring;

pub use document::{EvalSample, OcrRegion, PageRecord};
pub use embedding::{PageEmbedding, QueryEmbedding};
pub use error::{Error, Result};
pub use eval::{EvalMode, EvalOptions, EvalReport, FailureClass, SampleOutcome, Tokenizer};
pub use geometry::{BBox, PatchCoverage, PatchGrid};
pub use index::{CorpusIndex, Retrieval, RetrievalResult};
pub use scoring::{RegionScore, RegionStrategy, ScoringConfig, SimilarityMatrix, TokenAggregation};
