//! Run configuration: built-in defaults, overridden by a TOML key-value
//! file, overridden by command-line flags.
//!
//! ```toml
//! token_agg = "max"        # max | mean | sum
//! strategy = "max"         # max | mean | iou_weighted
//! percentile = 50.0
//! min_overlap = 0.25
//! candidates = 100         # Stage-1 K
//! top_pages = 1
//! thresholds = [0.25, 0.5, 0.7]
//! mode = "localization"    # localization | retrieval
//! workers = 8
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use regionrank_core::eval::DEFAULT_THRESHOLDS;
use regionrank_core::index::DEFAULT_CANDIDATES;
use regionrank_core::{EvalMode, RegionStrategy, ScoringConfig, TokenAggregation};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every setting optional; used for both the file layer and the flag layer.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub token_agg: Option<TokenAggregation>,
    pub strategy: Option<RegionStrategy>,
    pub percentile: Option<f64>,
    pub min_overlap: Option<f64>,
    #[serde(alias = "k")]
    pub candidates: Option<usize>,
    pub top_pages: Option<usize>,
    pub thresholds: Option<Vec<f64>>,
    pub mode: Option<EvalMode>,
    pub workers: Option<usize>,
    pub index: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl ConfigLayer {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// `self` wins wherever it has a value.
    pub fn over(self, lower: ConfigLayer) -> ConfigLayer {
        ConfigLayer {
            token_agg: self.token_agg.or(lower.token_agg),
            strategy: self.strategy.or(lower.strategy),
            percentile: self.percentile.or(lower.percentile),
            min_overlap: self.min_overlap.or(lower.min_overlap),
            candidates: self.candidates.or(lower.candidates),
            top_pages: self.top_pages.or(lower.top_pages),
            thresholds: self.thresholds.or(lower.thresholds),
            mode: self.mode.or(lower.mode),
            workers: self.workers.or(lower.workers),
            index: self.index.or(lower.index),
            samples: self.samples.or(lower.samples),
            queries: self.queries.or(lower.queries),
            output: self.output.or(lower.output),
        }
    }
}

/// Effective configuration, echoed into every output artifact.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub scoring: ScoringConfig,
    pub candidates: usize,
    pub top_pages: usize,
    pub thresholds: Vec<f64>,
    pub mode: EvalMode,
    pub workers: usize,
    pub index: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scoring: ScoringConfig::default(),
            candidates: DEFAULT_CANDIDATES,
            top_pages: 1,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            mode: EvalMode::Localization,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            index: None,
            samples: None,
            queries: None,
            output: None,
        }
    }
}

impl RunConfig {
    /// Applies a merged layer over the defaults and validates the result.
    pub fn resolve(layer: ConfigLayer) -> Result<Self> {
        let d = RunConfig::default();
        let cfg = RunConfig {
            scoring: ScoringConfig {
                token_agg: layer.token_agg.unwrap_or(d.scoring.token_agg),
                strategy: layer.strategy.unwrap_or(d.scoring.strategy),
                percentile: layer.percentile.unwrap_or(d.scoring.percentile),
                min_overlap: layer.min_overlap.unwrap_or(d.scoring.min_overlap),
            },
            candidates: layer.candidates.unwrap_or(d.candidates),
            top_pages: layer.top_pages.unwrap_or(d.top_pages),
            thresholds: layer.thresholds.unwrap_or(d.thresholds),
            mode: layer.mode.unwrap_or(d.mode),
            workers: layer.workers.unwrap_or(d.workers),
            index: layer.index,
            samples: layer.samples,
            queries: layer.queries,
            output: layer.output,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scoring
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.top_pages == 0 || self.candidates < self.top_pages {
            return Err(Error::Config(format!(
                "need candidates (K) >= top_pages >= 1, got K={}, top_pages={}",
                self.candidates, self.top_pages
            )));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        if self.thresholds.is_empty() || self.thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Config(
                "thresholds must be a non-empty list in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
