//! Sharded JSONL storage for dataset records and corpus statistics.

mod record;
mod shards;
mod stats;

pub use record::{word_count, Keyed, Provenance, ReferringSample, Refinement};
pub use shards::{atomic_write, shard_name, write_shards, IndexEntry, ShardSet, ShardWriter, INDEX_FILE};
pub use stats::{compute_stats, stats_of, DatasetStats, StatsConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("record {next:?} does not sort after {previous:?}")]
    OutOfOrder { previous: String, next: String },
    #[error("storage full while writing {0}")]
    StorageFull(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checksum mismatch in shard {shard}")]
    Checksum { shard: String },
    #[error("{path} line {line}: {detail}")]
    Line { path: String, line: usize, detail: String },
    #[error("malformed record: {0}")]
    Json(#[from] serde_json::Error),
    #[error("shard set already exists at {0}")]
    AlreadyExists(String),
    #[error("shard size must be at least 1")]
    InvalidShardSize,
    #[error("stats bin configurations differ")]
    BinMismatch,
}

/// Read a JSONL file, skipping blank lines.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<Vec<T>, StoreError> {
    let text = std::fs::read_to_string(path).map_err(|e| StoreError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| StoreError::Line {
                path: path.display().to_string(),
                line: i + 1,
                detail: e.to_string(),
            })
        })
        .collect()
}

/// Serialize records one per line.
pub fn to_jsonl<T: serde::Serialize>(records: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, &r).expect("records serialize");
        out.push(b'\n');
    }
    out
}
