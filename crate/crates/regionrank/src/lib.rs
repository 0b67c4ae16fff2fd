//! IO, persistence, reporting and the command-line front end for
//! [`regionrank_core`].

pub mod cli;
pub mod config;
pub mod emb;
pub mod error;
pub mod heatmap;
pub mod parallel;
pub mod records;
pub mod report;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
