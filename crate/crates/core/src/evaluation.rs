//! Scoring prediction files against benchmark files.
//!
//! Ground truth is a list of [`BenchmarkRecord`]s carrying either masks or
//! boxes. Each prediction names a `sample_id` and carries the same kind of
//! region. A benchmark item without a prediction scores as an empty
//! prediction; predictions for unknown ids are ignored. Both are reported.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::BenchmarkRecord;
use crate::mask::{rle_overlap, BBox, RleMask};
use crate::metrics::{report, Category, EvalReport, Metric, MetricError, ScoredPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<RleMask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Mask,
    Box,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("benchmark mixes mask and box records")]
    MixedBenchmark,
    #[error("benchmark record {0} has neither mask nor bbox")]
    NoRegion(String),
    #[error("prediction {sample_id} has no {kind:?}")]
    MissingRegion { sample_id: String, kind: RegionKind },
    #[error("duplicate prediction for {0}")]
    DuplicatePrediction(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

enum Region<'a> {
    Mask { pred: Option<&'a RleMask>, gt: &'a RleMask },
    Box { pred: Option<BBox>, gt: BBox },
}

struct Pair<'a> {
    sample_id: &'a str,
    category: Category,
    region: Region<'a>,
}

impl ScoredPair for Pair<'_> {
    fn sample_id(&self) -> &str {
        self.sample_id
    }

    fn category(&self) -> Option<Category> {
        Some(self.category)
    }

    fn overlap(&self) -> Result<(u64, u64), MetricError> {
        match &self.region {
            Region::Mask { pred: Some(p), gt } => rle_overlap(p, gt).map_err(|source| MetricError::Mask {
                sample_id: self.sample_id.to_string(),
                source,
            }),
            Region::Mask { pred: None, gt } => Ok((0, gt.area())),
            Region::Box { pred: Some(p), gt } => {
                let i = p.intersection_area(gt);
                Ok((i, p.area() + gt.area() - i))
            }
            Region::Box { pred: None, gt } => Ok((0, gt.area())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub kind: RegionKind,
    pub reports: Vec<EvalReport>,
    /// Benchmark ids with no prediction, scored as empty.
    pub missing: Vec<String>,
    /// Prediction ids not in the benchmark.
    pub extra: Vec<String>,
}

pub fn benchmark_kind(gt: &[BenchmarkRecord]) -> Result<RegionKind, EvalError> {
    let mut kind = None;
    for r in gt {
        let k = match (&r.mask, &r.bbox) {
            (Some(_), _) => RegionKind::Mask,
            (None, Some(_)) => RegionKind::Box,
            (None, None) => return Err(EvalError::NoRegion(r.sample_id.clone())),
        };
        if kind.is_some_and(|prev| prev != k) {
            return Err(EvalError::MixedBenchmark);
        }
        kind = Some(k);
    }
    Ok(kind.unwrap_or(RegionKind::Mask))
}

/// Score `predictions` against `gt` under each metric, per category and
/// pooled.
pub fn evaluate(
    gt: &[BenchmarkRecord],
    predictions: &[Prediction],
    metrics: &[Metric],
) -> Result<Evaluation, EvalError> {
    let kind = benchmark_kind(gt)?;
    let mut by_id: BTreeMap<&str, &Prediction> = BTreeMap::new();
    for p in predictions {
        if by_id.insert(p.sample_id.as_str(), p).is_some() {
            return Err(EvalError::DuplicatePrediction(p.sample_id.clone()));
        }
    }
    let mut missing = Vec::new();
    let mut pairs = Vec::with_capacity(gt.len());
    for r in gt {
        let pred = by_id.remove(r.sample_id.as_str());
        if pred.is_none() {
            missing.push(r.sample_id.clone());
        }
        let missing_region = || EvalError::MissingRegion {
            sample_id: r.sample_id.clone(),
            kind,
        };
        let region = match kind {
            RegionKind::Mask => Region::Mask {
                pred: pred.map(|p| p.mask.as_ref().ok_or_else(missing_region)).transpose()?,
                gt: r.mask.as_ref().expect("mask benchmark"),
            },
            RegionKind::Box => Region::Box {
                pred: pred.map(|p| p.bbox.ok_or_else(missing_region)).transpose()?,
                gt: r.bbox.expect("box benchmark"),
            },
        };
        pairs.push(Pair {
            sample_id: &r.sample_id,
            category: r.category,
            region,
        });
    }
    let extra = by_id.keys().map(|s| s.to_string()).collect();
    let reports = metrics
        .iter()
        .map(|&m| report(&pairs, m, true))
        .collect::<Result<_, _>>()?;
    Ok(Evaluation {
        kind,
        reports,
        missing,
        extra,
    })
}
