//! Tooling for building referring-expression segmentation data: mask kernels,
//! grounding metrics, a model gateway with a deterministic stub backend, the
//! three-phase annotation pipeline, benchmark curation with human review, and
//! sharded dataset storage.

pub mod curation;
pub mod datastore;
pub mod evaluation;
pub mod gateway;
pub mod mask;
pub mod metrics;
pub mod pipeline;

pub use mask::{BBox, BinaryMask, MaskError, RleMask, Trimap, TrimapLabel};
