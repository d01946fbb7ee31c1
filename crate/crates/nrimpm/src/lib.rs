//! File formats, run directories and reports around `nri_core`.

pub mod config;
pub mod evaluate;
pub mod format;
pub mod report;
pub mod run;
pub mod simulate;
pub mod svg;

use std::path::{Path, PathBuf};

pub use format::FormatError;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("missing artifact {path}: {reason}")]
    Missing { path: PathBuf, reason: String },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("run directory {0} is locked by another process")]
    Locked(PathBuf),
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error(transparent)]
    Train(#[from] nri_core::train::TrainError),
    #[error(transparent)]
    Eval(#[from] nri_core::eval::EvalError),
    #[error(transparent)]
    Sim(#[from] nri_core::sim::SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl RunError {
    pub(crate) fn missing(path: &Path, e: impl std::fmt::Display) -> Self {
        RunError::Missing {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }
    }

    /// Wraps a format error; a file that does not exist counts as missing.
    pub(crate) fn format(path: &Path, e: FormatError) -> Self {
        match e {
            FormatError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => Self::missing(path, io),
            source => RunError::Format {
                path: path.to_path_buf(),
                source,
            },
        }
    }

    /// Process exit code: 3 for missing artifacts, 4 for schema problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Missing { .. } => 3,
            RunError::Schema { .. } => 4,
            _ => 1,
        }
    }
}

/// Worker count from `NRIMPM_THREADS`, defaulting to the available parallelism.
pub fn worker_threads() -> usize {
    std::env::var("NRIMPM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Keeps freed tape buffers in the heap instead of returning them to the OS.
///
/// Every training step allocates and frees thousands of medium-sized
/// buffers; with glibc's defaults most of them are fresh mmaps whose page
/// faults dominate the arithmetic.
pub fn tune_allocator() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    // SAFETY: mallopt only adjusts allocator thresholds.
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, 1 << 30);
        libc::mallopt(libc::M_TRIM_THRESHOLD, 1 << 30);
        libc::mallopt(libc::M_TOP_PAD, 256 << 20);
    }
}
