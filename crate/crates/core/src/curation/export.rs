use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::review::BenchmarkManifest;
use super::CurationError;
use crate::datastore::{atomic_write, to_jsonl, Keyed};
use crate::mask::{rle_decode, tight_bbox, BBox, RleMask};
use crate::metrics::Category;

/// One benchmark line. Mask benchmarks carry `mask`, box benchmarks `bbox`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub sample_id: String,
    pub image_id: String,
    pub image_uri: String,
    pub width: u32,
    pub height: u32,
    pub text: String,
    pub category: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<RleMask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
}

impl Keyed for BenchmarkRecord {
    fn key(&self) -> &str {
        &self.sample_id
    }
}

pub fn benchmark_records(manifest: &BenchmarkManifest) -> Result<Vec<BenchmarkRecord>, CurationError> {
    if !manifest.finalized {
        return Err(CurationError::NotFinalized);
    }
    Ok(manifest
        .items
        .iter()
        .map(|it| BenchmarkRecord {
            sample_id: it.sample_id.clone(),
            image_id: it.image_id.clone(),
            image_uri: it.image_uri.clone(),
            width: it.width,
            height: it.height,
            text: it.referring_text.clone(),
            category: it.category,
            mask: Some(it.mask.clone()),
            bbox: None,
        })
        .collect())
}

/// Box twin of a finalized benchmark: each mask becomes its tight box.
/// A multi-object item's mask already covers every instance, so its box
/// spans all of them.
pub fn derive_bbox_benchmark(manifest: &BenchmarkManifest) -> Result<Vec<BenchmarkRecord>, CurationError> {
    benchmark_records(manifest)?
        .into_iter()
        .map(|mut r| {
            let rle = r.mask.take().expect("mask records");
            let mask = rle_decode(&rle).map_err(|e| CurationError::Mask {
                sample_id: r.sample_id.clone(),
                detail: e.to_string(),
            })?;
            r.bbox = Some(tight_bbox(&mask).map_err(|_| CurationError::EmptyMask(r.sample_id.clone()))?);
            Ok(r)
        })
        .collect()
}

/// Write `{name}.jsonl`, `{name}_{category}.jsonl` for each category and
/// the box twin `{name}_bbox.jsonl` into `dir`. Returns the paths written.
pub fn export_benchmark(manifest: &BenchmarkManifest, dir: &Path) -> Result<Vec<PathBuf>, CurationError> {
    let records = benchmark_records(manifest)?;
    let boxes = derive_bbox_benchmark(manifest)?;
    std::fs::create_dir_all(dir).map_err(|e| crate::datastore::StoreError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let mut written = Vec::new();
    let mut put = |file: String, bytes: Vec<u8>| -> Result<(), CurationError> {
        let path = dir.join(file);
        atomic_write(&path, &bytes)?;
        written.push(path);
        Ok(())
    };
    put(format!("{}.jsonl", manifest.name), to_jsonl(&records))?;
    for c in Category::ALL {
        put(
            format!("{}_{}.jsonl", manifest.name, c),
            to_jsonl(records.iter().filter(|r| r.category == c)),
        )?;
    }
    put(format!("{}_bbox.jsonl", manifest.name), to_jsonl(&boxes))?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curation::{Quotas, ReviewItem, ReviewStatus};
    use crate::mask::{rle_encode, testutil::rect, union_masks, BinaryMask};

    fn item(id: &str, c: Category, mask: &BinaryMask) -> ReviewItem {
        ReviewItem {
            sample_id: id.into(),
            image_id: id.into(),
            image_uri: String::new(),
            width: mask.width(),
            height: mask.height(),
            referring_text: "t".into(),
            mask: rle_encode(mask),
            proposed_category: c,
            category: c,
            status: ReviewStatus::Accepted,
            reviewer_id: None,
            decided_at: None,
            version: 1,
        }
    }

    fn finalized(items: Vec<ReviewItem>) -> BenchmarkManifest {
        let mut m = BenchmarkManifest::new("bench", Quotas::default(), items);
        m.finalized = true;
        m
    }

    #[test]
    fn boxes_are_tight() {
        let mut px = BinaryMask::empty(8, 8).unwrap();
        px.set(3, 5, true);
        let two = union_masks(&[rect(16, 16, 1, 3, 1, 3), rect(16, 16, 10, 14, 8, 12)]).unwrap();
        let m = finalized(vec![item("a", Category::Single, &px), item("b", Category::Multi, &two)]);
        let boxes = derive_bbox_benchmark(&m).unwrap();
        assert_eq!(boxes[0].bbox.unwrap().to_array(), [5, 3, 6, 4]);
        assert_eq!(boxes[1].bbox.unwrap().to_array(), [1, 1, 12, 14]);
        assert!(boxes.iter().all(|b| b.mask.is_none()));
        assert_eq!(derive_bbox_benchmark(&m).unwrap(), boxes);
    }

    #[test]
    fn preconditions() {
        let m = BenchmarkManifest::new("b", Quotas::default(), vec![]);
        assert!(matches!(derive_bbox_benchmark(&m), Err(CurationError::NotFinalized)));
        let empty = BinaryMask::empty(4, 4).unwrap();
        let m = finalized(vec![item("a", Category::Stuff, &empty)]);
        assert!(matches!(derive_bbox_benchmark(&m), Err(CurationError::EmptyMask(_))));
    }

    #[test]
    fn export_layout() {
        let dir = tempfile::tempdir().unwrap();
        let m = finalized(vec![
            item("a", Category::Single, &rect(4, 4, 0, 2, 0, 2)),
            item("b", Category::Stuff, &rect(4, 4, 1, 3, 1, 4)),
        ]);
        let paths = export_benchmark(&m, dir.path()).unwrap();
        let names: Vec<_> = paths
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(
            names,
            [
                "bench.jsonl",
                "bench_stuff.jsonl",
                "bench_part.jsonl",
                "bench_multi.jsonl",
                "bench_single.jsonl",
                "bench_bbox.jsonl"
            ]
        );
        let stuff = std::fs::read_to_string(dir.path().join("bench_stuff.jsonl")).unwrap();
        let r: BenchmarkRecord = serde_json::from_str(stuff.trim()).unwrap();
        assert_eq!(r.sample_id, "b");
        assert_eq!(
            std::fs::read_to_string(dir.path().join("bench_part.jsonl")).unwrap(),
            ""
        );
        let bbox = std::fs::read_to_string(dir.path().join("bench_bbox.jsonl")).unwrap();
        assert!(bbox.lines().next().unwrap().contains("\"bbox\":[0,0,2,2]"));
    }
}
