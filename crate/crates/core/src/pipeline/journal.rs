//! Append-only JSONL journal of images that reached a terminal state.
//!
//! Each line holds everything the final output needs for one image, so a
//! resumed run never re-queries backends for journaled images. A torn final
//! line (no trailing newline) is a crash artifact and is cut off on open.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FailureRecord, ImageState, PipelineError, RejectRecord};
use crate::datastore::{atomic_write, ReferringSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub image_id: String,
    pub state: ImageState,
    pub regions: u64,
    pub generated: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<ReferringSample>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rejects: Vec<RejectRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureRecord>,
}

impl JournalEntry {
    pub fn failed(image_id: &str, failure: FailureRecord) -> Self {
        Self {
            image_id: image_id.to_string(),
            state: ImageState::Failed,
            regions: 0,
            generated: 0,
            samples: Vec::new(),
            rejects: Vec::new(),
            failure: Some(failure),
        }
    }
}

pub struct Journal {
    path: PathBuf,
    file: File,
    entries: BTreeMap<String, JournalEntry>,
}

impl Journal {
    /// Open or create the journal at `path` and replay it.
    pub fn open(path: &Path) -> Result<Self, PipelineError> {
        let io = |e| PipelineError::io(path, e);
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io(e)),
        };
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        let mut entries = BTreeMap::new();
        for (i, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
            if line.is_empty() {
                continue;
            }
            let entry: JournalEntry = serde_json::from_slice(line).map_err(|e| PipelineError::Journal {
                path: path.display().to_string(),
                line: i + 1,
                detail: e.to_string(),
            })?;
            entries.entry(entry.image_id.clone()).or_insert(entry);
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        if complete < bytes.len() {
            tracing::warn!(path = %path.display(), "discarding torn journal tail");
            file.set_len(complete as u64).map_err(io)?;
        }
        Ok(Self {
            path: path.to_path_buf(),
            file,
            entries,
        })
    }

    pub fn contains(&self, image_id: &str) -> bool {
        self.entries.contains_key(image_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in image id order.
    pub fn entries(&self) -> impl Iterator<Item = &JournalEntry> {
        self.entries.values()
    }

    /// Durably record a terminal image.
    pub fn append(&mut self, entry: JournalEntry) -> Result<(), PipelineError> {
        let mut line = serde_json::to_vec(&entry).expect("journal entries serialize");
        line.push(b'\n');
        let io = |e| PipelineError::io(&self.path, e);
        self.file.write_all(&line).map_err(io)?;
        self.file.sync_data().map_err(io)?;
        self.entries.entry(entry.image_id.clone()).or_insert(entry);
        Ok(())
    }

    /// Rewrite the journal sorted by image id, so that two runs over the
    /// same inputs leave identical journals regardless of completion order.
    pub fn compact(&mut self) -> Result<(), PipelineError> {
        let mut bytes = Vec::new();
        for e in self.entries.values() {
            serde_json::to_writer(&mut bytes, e).expect("journal entries serialize");
            bytes.push(b'\n');
        }
        atomic_write(&self.path, &bytes)?;
        self.file = OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| PipelineError::io(&self.path, e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str) -> JournalEntry {
        JournalEntry {
            image_id: id.into(),
            state: ImageState::NoEntities,
            regions: 0,
            generated: 0,
            samples: vec![],
            rejects: vec![],
            failure: None,
        }
    }

    #[test]
    fn replay_and_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jsonl");
        let mut j = Journal::open(&path).unwrap();
        j.append(entry("b")).unwrap();
        j.append(entry("a")).unwrap();
        drop(j);

        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"image_id\":\"c\",\"sta").unwrap();
        drop(f);

        let mut j = Journal::open(&path).unwrap();
        assert_eq!(j.len(), 2);
        assert!(j.contains("a") && !j.contains("c"));
        j.append(entry("c")).unwrap();
        drop(j);
        let j = Journal::open(&path).unwrap();
        assert_eq!(j.len(), 3);
    }

    #[test]
    fn compaction_sorts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jsonl");
        let mut j = Journal::open(&path).unwrap();
        for id in ["c", "a", "b"] {
            j.append(entry(id)).unwrap();
        }
        j.compact().unwrap();
        j.append(entry("d")).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let ids: Vec<_> = text
            .lines()
            .map(|l| serde_json::from_str::<JournalEntry>(l).unwrap().image_id)
            .collect();
        assert_eq!(ids, ["a", "b", "c", "d"]);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jsonl");
        std::fs::write(
            &path,
            "garbage\n{\"image_id\":\"a\",\"state\":\"done\",\"regions\":0,\"generated\":0}\n",
        )
        .unwrap();
        assert!(matches!(
            Journal::open(&path),
            Err(PipelineError::Journal { line: 1, .. })
        ));
    }
}
