use std::path::PathBuf;

/// Errors from loading, persisting and running the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad magic {found:?}, expected \"SNPE\"")]
    BadMagic { path: PathBuf, found: [u8; 4] },

    #[error("{path}: unsupported format version {found} (expected {expected})")]
    Version {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}: truncated payload while reading {what}")]
    Truncated { path: PathBuf, what: &'static str },

    #[error("{path}: page record {id:?} has {rows} rows, grid {grid}x{grid} needs {expected}")]
    RowCount {
        path: PathBuf,
        id: String,
        rows: u32,
        grid: u32,
        expected: u64,
    },

    #[error("{path}: pooled vector of {id:?} deviates from the patch mean by {max_deviation:e} (limit 1e-6)")]
    PooledMismatch {
        path: PathBuf,
        id: String,
        max_deviation: f32,
    },

    #[error("{path}: {what}")]
    Format { path: PathBuf, what: String },

    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: duplicate id {id:?}")]
    Duplicate { path: PathBuf, id: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] regionrank_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for invalid input, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
