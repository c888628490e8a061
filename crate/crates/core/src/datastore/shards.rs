//! JSONL shards with a tab-separated integrity index.
//!
//! Layout under the shard-set root:
//!
//! ```text
//! shard-00000.jsonl
//! shard-00001.jsonl
//! index.tsv          # name \t first_id \t count \t sha256
//! ```
//!
//! Every file is written to a `.tmp` sibling, synced, then renamed into
//! place, so a crash leaves either the old or the new version. The index is
//! derivable from the shards alone and is rebuilt on open when it is missing
//! or disagrees with the shard files on disk.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::record::Keyed;
use super::StoreError;

pub const INDEX_FILE: &str = "index.tsv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub name: String,
    pub first_id: String,
    pub count: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardSet {
    root: PathBuf,
    entries: Vec<IndexEntry>,
}

pub fn shard_name(ordinal: usize) -> String {
    format!("shard-{ordinal:05}.jsonl")
}

fn io_err(path: &Path, e: io::Error) -> StoreError {
    if e.kind() == io::ErrorKind::StorageFull {
        StoreError::StorageFull(path.display().to_string())
    } else {
        StoreError::Io {
            path: path.display().to_string(),
            source: e,
        }
    }
}

/// Write `bytes` to `path` through a synced temp file and an atomic rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
    f.sync_all().map_err(|e| io_err(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct ShardWriter {
    root: PathBuf,
    shard_size: usize,
    buffer: Vec<u8>,
    buffered: u64,
    first_id: Option<String>,
    last_id: Option<String>,
    entries: Vec<IndexEntry>,
}

impl ShardWriter {
    /// Start a new shard set in `root`, which must not already hold shards.
    pub fn create(root: impl Into<PathBuf>, shard_size: usize) -> Result<Self, StoreError> {
        let root = root.into();
        if shard_size == 0 {
            return Err(StoreError::InvalidShardSize);
        }
        fs::create_dir_all(&root).map_err(|e| io_err(&root, e))?;
        if !scan_shard_files(&root)?.is_empty() || root.join(INDEX_FILE).exists() {
            return Err(StoreError::AlreadyExists(root.display().to_string()));
        }
        Ok(Self {
            root,
            shard_size,
            buffer: Vec::new(),
            buffered: 0,
            first_id: None,
            last_id: None,
            entries: Vec::new(),
        })
    }

    pub fn push<T: Serialize + Keyed>(&mut self, record: &T) -> Result<(), StoreError> {
        let id = record.key();
        if let Some(prev) = &self.last_id {
            if id <= prev.as_str() {
                return Err(StoreError::OutOfOrder {
                    previous: prev.clone(),
                    next: id.to_string(),
                });
            }
        }
        serde_json::to_writer(&mut self.buffer, record)?;
        self.buffer.push(b'\n');
        self.buffered += 1;
        if self.first_id.is_none() {
            self.first_id = Some(id.to_string());
        }
        self.last_id = Some(id.to_string());
        if self.buffered as usize == self.shard_size {
            self.flush_shard()?;
        }
        Ok(())
    }

    fn flush_shard(&mut self) -> Result<(), StoreError> {
        if self.buffered == 0 {
            return Ok(());
        }
        let name = shard_name(self.entries.len());
        atomic_write(&self.root.join(&name), &self.buffer)?;
        self.entries.push(IndexEntry {
            name,
            first_id: self.first_id.take().unwrap_or_default(),
            count: self.buffered,
            sha256: sha256_hex(&self.buffer),
        });
        self.buffer.clear();
        self.buffered = 0;
        write_index(&self.root, &self.entries)
    }

    pub fn finish(mut self) -> Result<ShardSet, StoreError> {
        self.flush_shard()?;
        write_index(&self.root, &self.entries)?;
        Ok(ShardSet {
            root: self.root,
            entries: self.entries,
        })
    }
}

/// Write every record of an id-ordered stream into a fresh shard set.
pub fn write_shards<'a, T, I>(records: I, root: impl Into<PathBuf>, shard_size: usize) -> Result<ShardSet, StoreError>
where
    T: Serialize + Keyed + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let mut w = ShardWriter::create(root, shard_size)?;
    for r in records {
        w.push(r)?;
    }
    w.finish()
}

fn write_index(root: &Path, entries: &[IndexEntry]) -> Result<(), StoreError> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", e.name, e.first_id, e.count, e.sha256));
    }
    atomic_write(&root.join(INDEX_FILE), out.as_bytes())
}

fn scan_shard_files(root: &Path) -> Result<Vec<String>, StoreError> {
    let mut names = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| io_err(root, e))? {
        let entry = entry.map_err(|e| io_err(root, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with("shard-") && name.ends_with(".jsonl") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

fn parse_index(text: &str) -> Option<Vec<IndexEntry>> {
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|line| {
            let mut it = line.split('\t');
            let entry = IndexEntry {
                name: it.next()?.to_string(),
                first_id: it.next()?.to_string(),
                count: it.next()?.parse().ok()?,
                sha256: it.next()?.to_string(),
            };
            it.next().is_none().then_some(entry)
        })
        .collect()
}

impl ShardSet {
    /// Open an existing shard set, rebuilding the index from the shard files
    /// if it is missing, unreadable, or lists a different set of shards.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let on_disk = scan_shard_files(&root)?;
        let listed = fs::read_to_string(root.join(INDEX_FILE))
            .ok()
            .and_then(|t| parse_index(&t));
        if let Some(entries) = listed {
            let names: Vec<&str> = entries.iter().map(|e| e.name.as_str()).collect();
            if names == on_disk.iter().map(String::as_str).collect::<Vec<_>>() {
                return Ok(Self { root, entries });
            }
        }
        tracing::warn!(root = %root.display(), "shard index missing or stale, rebuilding");
        let set = Self::rebuild(root, &on_disk)?;
        write_index(&set.root, &set.entries)?;
        Ok(set)
    }

    fn rebuild(root: PathBuf, names: &[String]) -> Result<Self, StoreError> {
        let mut entries = Vec::with_capacity(names.len());
        for name in names {
            let path = root.join(name);
            let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
            let mut count = 0u64;
            let mut first_id = String::new();
            for line in bytes.split(|&b| b == b'\n').filter(|l| !l.is_empty()) {
                if count == 0 {
                    let v: serde_json::Value = serde_json::from_slice(line)?;
                    first_id = v
                        .get("sample_id")
                        .and_then(|s| s.as_str())
                        .unwrap_or_default()
                        .to_string();
                }
                count += 1;
            }
            entries.push(IndexEntry {
                name: name.clone(),
                first_id,
                count,
                sha256: sha256_hex(&bytes),
            });
        }
        Ok(Self { root, entries })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> u64 {
        self.entries.iter().map(|e| e.count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Raw bytes of one shard after checksum verification.
    pub fn shard_bytes(&self, entry: &IndexEntry) -> Result<Vec<u8>, StoreError> {
        let path = self.root.join(&entry.name);
        let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(StoreError::Checksum {
                shard: entry.name.clone(),
            });
        }
        Ok(bytes)
    }

    pub fn read_shard<T: DeserializeOwned>(&self, entry: &IndexEntry) -> Result<Vec<T>, StoreError> {
        let bytes = self.shard_bytes(entry)?;
        BufReader::new(bytes.as_slice())
            .lines()
            .filter(|l| !matches!(l, Ok(s) if s.is_empty()))
            .map(|line| {
                let line = line.map_err(|e| io_err(&self.root.join(&entry.name), e))?;
                Ok(serde_json::from_str(&line)?)
            })
            .collect()
    }

    pub fn read_all<T: DeserializeOwned>(&self) -> Result<Vec<T>, StoreError> {
        let mut out = Vec::with_capacity(self.len() as usize);
        for e in &self.entries {
            out.extend(self.read_shard(e)?);
        }
        Ok(out)
    }

    pub fn verify(&self) -> Result<(), StoreError> {
        for e in &self.entries {
            self.shard_bytes(e)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    struct Row {
        sample_id: String,
        v: u32,
    }

    impl Keyed for Row {
        fn key(&self) -> &str {
            &self.sample_id
        }
    }

    fn rows(n: u32) -> Vec<Row> {
        (0..n)
            .map(|i| Row {
                sample_id: format!("s{i:04}"),
                v: i,
            })
            .collect()
    }

    #[test]
    fn splits_into_shards() {
        let dir = tempfile::tempdir().unwrap();
        let set = write_shards(&rows(10), dir.path().join("set"), 4).unwrap();
        let counts: Vec<u64> = set.entries().iter().map(|e| e.count).collect();
        assert_eq!(counts, vec![4, 4, 2]);
        assert_eq!(set.entries()[1].first_id, "s0004");
        let back: Vec<Row> = ShardSet::open(dir.path().join("set")).unwrap().read_all().unwrap();
        assert_eq!(back, rows(10));
        let index = fs::read_to_string(dir.path().join("set").join(INDEX_FILE)).unwrap();
        assert!(index.starts_with("shard-00000.jsonl\ts0000\t4\t"));
        assert_eq!(index.lines().count(), 3);
    }

    #[test]
    fn rejects_out_of_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ShardWriter::create(dir.path(), 4).unwrap();
        let mut r = rows(3);
        r.swap(1, 2);
        w.push(&r[0]).unwrap();
        w.push(&r[1]).unwrap();
        assert!(matches!(w.push(&r[2]), Err(StoreError::OutOfOrder { .. })));
        let mut w2 = ShardWriter::create(dir.path().join("dup"), 4).unwrap();
        w2.push(&r[0]).unwrap();
        assert!(matches!(w2.push(&r[0]), Err(StoreError::OutOfOrder { .. })));
    }

    #[test]
    fn refuses_to_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        write_shards(&rows(2), dir.path(), 4).unwrap();
        assert!(matches!(
            ShardWriter::create(dir.path(), 4),
            Err(StoreError::AlreadyExists(_))
        ));
        assert!(matches!(
            ShardWriter::create(dir.path().join("x"), 0),
            Err(StoreError::InvalidShardSize)
        ));
    }

    #[test]
    fn index_recovers_after_crash() {
        let dir = tempfile::tempdir().unwrap();
        let fresh = write_shards(&rows(10), dir.path().join("fresh"), 4).unwrap();
        let fresh_index = fs::read_to_string(fresh.root().join(INDEX_FILE)).unwrap();

        // Crash after shard 2 hit disk but before the index caught up: the
        // index only lists shard 0, and a stray temp file is left behind.
        let crashed = dir.path().join("crashed");
        write_shards(&rows(10), &crashed, 4).unwrap();
        let first_line = fresh_index.lines().next().unwrap().to_string() + "\n";
        fs::write(crashed.join(INDEX_FILE), first_line).unwrap();
        fs::write(crashed.join("index.tsv.tmp"), "garbage").unwrap();
        let reopened = ShardSet::open(&crashed).unwrap();
        assert_eq!(reopened.entries(), fresh.entries());
        assert_eq!(fs::read_to_string(crashed.join(INDEX_FILE)).unwrap(), fresh_index);

        fs::remove_file(crashed.join(INDEX_FILE)).unwrap();
        assert_eq!(ShardSet::open(&crashed).unwrap().entries(), fresh.entries());
    }

    #[test]
    fn corrupt_shard_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let set = write_shards(&rows(6), dir.path(), 4).unwrap();
        let path = dir.path().join(shard_name(1));
        let mut bytes = fs::read(&path).unwrap();
        bytes[3] ^= 1;
        fs::write(&path, bytes).unwrap();
        match set.read_all::<Row>() {
            Err(StoreError::Checksum { shard }) => assert_eq!(shard, "shard-00001.jsonl"),
            other => panic!("expected checksum error, got {other:?}"),
        }
        assert!(set.verify().is_err());
    }

    #[test]
    fn empty_set() {
        let dir = tempfile::tempdir().unwrap();
        let set = write_shards::<Row, _>(&[], dir.path(), 4).unwrap();
        assert!(set.is_empty());
        assert_eq!(fs::read_to_string(dir.path().join(INDEX_FILE)).unwrap(), "");
        assert!(ShardSet::open(dir.path()).unwrap().is_empty());
    }
}
