//! Three-stage dataset synthesis: locate entities (caption, phrase
//! grounding, box-prompted segmentation), write one referring expression per
//! region, and keep only pairs whose text re-segments to the same mask.
//!
//! Runs are resumable through an append-only journal of finished images and
//! deterministic: the output tree depends only on the manifest, the config
//! and the backends' replies, never on scheduling.

mod journal;
mod run;
mod stages;

pub use journal::{Journal, JournalEntry};
pub use run::{run_pipeline, RunControl, RunPaths};
pub use stages::{filter_sample, FilterVerdict, GroundedRegion};

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datastore::StoreError;

pub const PIPELINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("manifest line {line}: {detail}")]
    Manifest { line: usize, detail: String },
    #[error("journal {path} line {line} is corrupt: {detail}")]
    Journal { path: String, line: usize, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("run halted after {completed} image(s); resume to continue")]
    Halted { completed: usize },
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageMode {
    /// Each image runs through all three stages before it is journaled.
    #[default]
    PerImage,
    /// Each stage runs over every pending image before the next starts.
    GlobalPass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub filter_iou_threshold: f64,
    pub min_words: Option<u32>,
    pub max_words: Option<u32>,
    pub shard_size: usize,
    pub concurrency: usize,
    pub mode: StageMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            filter_iou_threshold: 0.5,
            min_words: None,
            max_words: None,
            shard_size: 1000,
            concurrency: 8,
            mode: StageMode::PerImage,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let t = self.filter_iou_threshold;
        if !(t > 0.0 && t < 1.0) {
            return Err(PipelineError::Config(format!(
                "filter_iou_threshold must be in (0, 1), got {t}"
            )));
        }
        if self.shard_size == 0 {
            return Err(PipelineError::Config("shard_size must be at least 1".into()));
        }
        if self.concurrency == 0 {
            return Err(PipelineError::Config("concurrency must be at least 1".into()));
        }
        if let (Some(lo), Some(hi)) = (self.min_words, self.max_words) {
            if lo > hi {
                return Err(PipelineError::Config(format!("min_words {lo} exceeds max_words {hi}")));
            }
        }
        Ok(())
    }
}

/// One input image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub image_id: String,
    pub uri: String,
    pub width: u32,
    pub height: u32,
}

/// Image ids end up as sample id prefixes (`{image_id}#{ordinal}`), so they
/// may not contain characters at or below `#`; that keeps the string order
/// of sample ids equal to the (image, ordinal) order.
pub fn validate_image_id(id: &str) -> Result<(), String> {
    if id.is_empty() {
        return Err("image_id is empty".into());
    }
    if let Some(c) = id.chars().find(|&c| c <= '#') {
        return Err(format!("image_id {id:?} contains forbidden character {c:?}"));
    }
    Ok(())
}

pub fn parse_manifest(reader: impl BufRead) -> Result<Vec<ManifestEntry>, PipelineError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let err = |detail: String| PipelineError::Manifest { line: line_no, detail };
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        validate_image_id(&entry.image_id).map_err(err)?;
        if entry.width == 0 || entry.height == 0 {
            return Err(err(format!("image {} has zero size", entry.image_id)));
        }
        if !seen.insert(entry.image_id.clone()) {
            return Err(err(format!("duplicate image_id {}", entry.image_id)));
        }
        out.push(entry);
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, PipelineError> {
    let f = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
    parse_manifest(BufReader::new(f))
}

/// Deterministic id from image, region ordinal and template version.
pub fn sample_id(image_id: &str, ordinal: usize, template_version: &str) -> String {
    format!("{image_id}#{ordinal:04}@{template_version}")
}

/// A dropped generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectRecord {
    pub sample_id: String,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_iou: Option<f64>,
}

pub const REASON_LOW_IOU: &str = "low_iou";
pub const REASON_FILTER_ERROR: &str = "filter_error";

/// An image that could not be processed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub image_id: String,
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageState {
    Done,
    NoEntities,
    Failed,
}

/// Wall-clock seconds spent per stage during this invocation only.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StageTiming {
    pub localize_secs: f64,
    pub generate_secs: f64,
    pub filter_secs: f64,
}

/// Counts reconcile as `kept + dropped + filter_errors == generated` and
/// `done + no_entities + failed == images`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunReport {
    pub images: u64,
    pub done: u64,
    pub no_entities: u64,
    pub failed: u64,
    pub regions: u64,
    pub generated: u64,
    pub kept: u64,
    pub dropped: u64,
    pub filter_errors: u64,
    /// Not written to `report.json`, which must stay byte-stable.
    #[serde(skip)]
    pub timing: StageTiming,
}

impl RunReport {
    pub fn errors(&self) -> u64 {
        self.failed + self.filter_errors
    }
}
