//! Benchmark construction: category screening, boundary refinement, quota
//! assembly, human review and the box-level twin.

mod assemble;
mod export;
mod refine;
mod review;
mod screen;
pub mod service;

pub use assemble::{assemble_benchmark, top_up, AssembleOptions, Quotas};
pub use export::{benchmark_records, derive_bbox_benchmark, export_benchmark, BenchmarkRecord};
pub use refine::{refine_all, refine_boundary, RefineConfig};
pub use review::{
    replay, Action, AuditEvent, BenchmarkManifest, Decision, Progress, ReviewError, ReviewItem, ReviewStatus,
    StatusCounts,
};
pub use screen::{classify_and_screen, Quarantined, ScreenOutcome, ScreenReject};

use thiserror::Error;

use crate::datastore::StoreError;
use crate::metrics::Category;

pub const FLAG_REFINE_SKIPPED: &str = "refine_skipped";
pub const FLAG_REFINE_DIVERGENT: &str = "refine_divergent";
pub const REASON_REFERRING_INCORRECT: &str = "referring_incorrect";

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("sample {0} has an empty mask")]
    EmptyMask(String),
    #[error("sample {0} has no category")]
    MissingCategory(String),
    #[error("category {category}: quota {quota} but only {available} eligible candidates")]
    QuotaUnmet {
        category: Category,
        quota: usize,
        available: usize,
    },
    #[error("category {category}: quota {quota} but {accepted} accepted items")]
    QuotaMismatch {
        category: Category,
        quota: usize,
        accepted: usize,
    },
    #[error("{0} items are still pending review")]
    Unresolved(usize),
    #[error("manifest is not finalized")]
    NotFinalized,
    #[error("manifest is already finalized")]
    AlreadyFinalized,
    #[error("invalid mask in sample {sample_id}: {detail}")]
    Mask { sample_id: String, detail: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}
