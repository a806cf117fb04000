//! Run configuration and the `train`, `sweep` and `analyze` commands.
//!
//! Output directory layout:
//!
//! ```text
//! out/
//!   model.json, model.hash      trained model and the config it came from
//!   sweeps/<doc>.K<k>.ndjson    one interchange file per (document, K)
//!   ppl.csv                     per-document and corpus-mean perplexity
//!   reports/<analysis>.{csv,json}
//!   logs/<command>.jsonl        warnings, one JSON object per line
//! ```
//!
//! Every CSV starts with a `# config_hash=...` line and every JSON report
//! carries the same hash. Nothing written depends on wall-clock time or on
//! the number of workers.

mod analyze;
mod config;
mod output;
mod run;

pub use analyze::{cmd_analyze, Analysis};
pub use config::{NRange, ProviderChoice, RunConfig};
pub use output::RunLog;
pub use run::{cmd_sweep, cmd_train, load_documents, load_sweeps, SweepSummary, TrainSummary};

use thiserror::Error;

use crate::analytics::AnalyticsError;
use crate::annotate::AnnotateError;
use crate::corpus::CorpusError;
use crate::provider::ProviderError;
use crate::sweep::SweepError;

#[derive(Debug, Error)]
pub enum ReportError {
    /// Bad or inconsistent configuration, detected before work starts.
    #[error("configuration error: {0}")]
    Config(String),
    /// Refusing to overwrite existing outputs.
    #[error("{0}")]
    Refused(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

impl ReportError {
    /// 2 for usage and configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ReportError::Config(_) | ReportError::Refused(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
        move |source| ReportError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Runs `f` on a pool of `workers` threads (0: one per core).
pub fn with_pool<T: Send>(
    workers: usize,
    f: impl FnOnce() -> Result<T, ReportError> + Send,
) -> Result<T, ReportError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ReportError::Pool(e.to_string()))?
        .install(f)
}
