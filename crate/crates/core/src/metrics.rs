//! Grounding metrics: gIoU (mean of per-sample IoU), cIoU (cumulative
//! intersection over cumulative union) and Acc@τ, plus per-category reports
//! laid out as Stuff / Part / Multi / Single / All.
//!
//! Scores are kept in `[0, 1]`; the ×100 presentation scale is applied only
//! by [`format_table`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{iou_from_counts, rle_encode, rle_overlap, BBox, BinaryMask, MaskError, RleMask};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("no pairs to score")]
    EmptyInput,
    #[error("sample {sample_id}: {source}")]
    Mask {
        sample_id: String,
        #[source]
        source: MaskError,
    },
    #[error("sample {sample_id} has no category")]
    MissingCategory { sample_id: String },
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Stuff,
    Part,
    Multi,
    Single,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Stuff, Category::Part, Category::Multi, Category::Single];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Stuff => "stuff",
            Category::Part => "part",
            Category::Multi => "multi",
            Category::Single => "single",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Category::Stuff => "Stuff",
            Category::Part => "Part",
            Category::Multi => "Multi",
            Category::Single => "Single",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = MetricError;

    /// Case-insensitive, surrounding whitespace and trailing punctuation ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().trim_end_matches(['.', '!', ',', ';']).to_ascii_lowercase();
        match t.as_str() {
            "stuff" => Ok(Category::Stuff),
            "part" => Ok(Category::Part),
            "multi" => Ok(Category::Multi),
            "single" => Ok(Category::Single),
            _ => Err(MetricError::UnknownCategory(s.to_string())),
        }
    }
}

/// A mask in either storage form.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskInput {
    Dense(BinaryMask),
    Rle(RleMask),
}

impl MaskInput {
    fn overlap(&self, other: &MaskInput) -> Result<(u64, u64), MaskError> {
        match (self, other) {
            (MaskInput::Rle(a), MaskInput::Rle(b)) => rle_overlap(a, b),
            (MaskInput::Dense(a), MaskInput::Dense(b)) => a.overlap(b),
            (MaskInput::Dense(a), MaskInput::Rle(b)) => rle_overlap(&rle_encode(a), b),
            (MaskInput::Rle(a), MaskInput::Dense(b)) => rle_overlap(a, &rle_encode(b)),
        }
    }
}

impl From<BinaryMask> for MaskInput {
    fn from(m: BinaryMask) -> Self {
        MaskInput::Dense(m)
    }
}

impl From<RleMask> for MaskInput {
    fn from(m: RleMask) -> Self {
        MaskInput::Rle(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskPair {
    pub sample_id: String,
    pub prediction: MaskInput,
    pub ground_truth: MaskInput,
    pub category: Option<Category>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxPair {
    pub sample_id: String,
    pub prediction: BBox,
    pub ground_truth: BBox,
    pub category: Option<Category>,
}

/// Anything that can be scored by pixel overlap.
pub trait ScoredPair: Sync {
    fn sample_id(&self) -> &str;
    fn category(&self) -> Option<Category>;
    /// `(|P ∩ G|, |P ∪ G|)`.
    fn overlap(&self) -> Result<(u64, u64), MetricError>;
}

impl ScoredPair for MaskPair {
    fn sample_id(&self) -> &str {
        &self.sample_id
    }

    fn category(&self) -> Option<Category> {
        self.category
    }

    fn overlap(&self) -> Result<(u64, u64), MetricError> {
        self.prediction
            .overlap(&self.ground_truth)
            .map_err(|source| MetricError::Mask {
                sample_id: self.sample_id.clone(),
                source,
            })
    }
}

impl ScoredPair for BoxPair {
    fn sample_id(&self) -> &str {
        &self.sample_id
    }

    fn category(&self) -> Option<Category> {
        self.category
    }

    fn overlap(&self) -> Result<(u64, u64), MetricError> {
        let inter = self.prediction.intersection_area(&self.ground_truth);
        Ok((inter, self.prediction.area() + self.ground_truth.area() - inter))
    }
}

/// Partial sums for all three metrics. Merging is associative; the integer
/// parts are exact and the IoU sum uses compensated addition.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IouAccumulator {
    pub intersection: u64,
    pub union: u64,
    iou_sum: f64,
    iou_comp: f64,
    pub hits: u64,
    pub n: u64,
}

impl IouAccumulator {
    pub fn push(&mut self, intersection: u64, union: u64, threshold: Option<f64>) {
        let iou = iou_from_counts(intersection, union);
        self.intersection += intersection;
        self.union += union;
        self.add_iou(iou);
        if threshold.is_some_and(|t| iou >= t) {
            self.hits += 1;
        }
        self.n += 1;
    }

    fn add_iou(&mut self, v: f64) {
        // Neumaier summation
        let t = self.iou_sum + v;
        if self.iou_sum.abs() >= v.abs() {
            self.iou_comp += (self.iou_sum - t) + v;
        } else {
            self.iou_comp += (v - t) + self.iou_sum;
        }
        self.iou_sum = t;
    }

    pub fn merge(mut self, other: IouAccumulator) -> IouAccumulator {
        self.intersection += other.intersection;
        self.union += other.union;
        self.add_iou(other.iou_sum);
        self.iou_comp += other.iou_comp;
        self.hits += other.hits;
        self.n += other.n;
        self
    }

    pub fn giou(&self) -> f64 {
        (self.iou_sum + self.iou_comp) / self.n as f64
    }

    pub fn ciou(&self) -> f64 {
        iou_from_counts(self.intersection, self.union)
    }

    pub fn accuracy(&self) -> f64 {
        self.hits as f64 / self.n as f64
    }
}

fn overlaps<P: ScoredPair>(pairs: &[P]) -> Result<Vec<(u64, u64)>, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    // ordered collect keeps the fold below independent of thread scheduling
    pairs.par_iter().map(|p| p.overlap()).collect()
}

fn accumulate<P: ScoredPair>(pairs: &[P], threshold: Option<f64>) -> Result<IouAccumulator, MetricError> {
    let mut acc = IouAccumulator::default();
    for (i, u) in overlaps(pairs)? {
        acc.push(i, u, threshold);
    }
    Ok(acc)
}

fn check_threshold(t: f64) -> Result<(), MetricError> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(MetricError::InvalidThreshold(t))
    }
}

/// Mean of per-pair IoU.
pub fn giou<P: ScoredPair>(pairs: &[P]) -> Result<f64, MetricError> {
    Ok(accumulate(pairs, None)?.giou())
}

/// Σ|P∩G| / Σ|P∪G|; all-empty input scores 1.0.
pub fn ciou<P: ScoredPair>(pairs: &[P]) -> Result<f64, MetricError> {
    Ok(accumulate(pairs, None)?.ciou())
}

/// Fraction of pairs with IoU ≥ `threshold`.
pub fn acc_at<P: ScoredPair>(pairs: &[P], threshold: f64) -> Result<f64, MetricError> {
    check_threshold(threshold)?;
    Ok(accumulate(pairs, Some(threshold))?.accuracy())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "threshold", rename_all = "lowercase")]
pub enum Metric {
    #[serde(rename = "giou")]
    GIoU,
    #[serde(rename = "ciou")]
    CIoU,
    #[serde(rename = "acc")]
    AccAt(f64),
}

impl Metric {
    fn score(&self, acc: &IouAccumulator) -> f64 {
        match self {
            Metric::GIoU => acc.giou(),
            Metric::CIoU => acc.ciou(),
            Metric::AccAt(_) => acc.accuracy(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Metric::GIoU => "gIoU".into(),
            Metric::CIoU => "cIoU".into(),
            Metric::AccAt(t) => format!("Acc@{t}"),
        }
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "giou" => Ok(Metric::GIoU),
            "ciou" => Ok(Metric::CIoU),
            _ => {
                let t = lower
                    .strip_prefix("acc@")
                    .ok_or_else(|| format!("unknown metric {s:?}"))?
                    .parse::<f64>()
                    .map_err(|e| format!("bad threshold in {s:?}: {e}"))?;
                check_threshold(t).map_err(|e| e.to_string())?;
                Ok(Metric::AccAt(t))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub score: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: Metric,
    pub categories: BTreeMap<Category, CategoryScore>,
    pub overall: f64,
    pub n: u64,
}

/// Score `pairs` overall and, when `per_category` is set, per category. The
/// overall column always pools every pair; it is never a mean of category
/// scores.
pub fn report<P: ScoredPair>(pairs: &[P], metric: Metric, per_category: bool) -> Result<EvalReport, MetricError> {
    let threshold = match metric {
        Metric::AccAt(t) => {
            check_threshold(t)?;
            Some(t)
        }
        _ => None,
    };
    let counts = overlaps(pairs)?;
    let mut overall = IouAccumulator::default();
    let mut by_cat: BTreeMap<Category, IouAccumulator> = BTreeMap::new();
    for (pair, &(i, u)) in pairs.iter().zip(&counts) {
        overall.push(i, u, threshold);
        if per_category {
            let cat = pair.category().ok_or_else(|| MetricError::MissingCategory {
                sample_id: pair.sample_id().to_string(),
            })?;
            by_cat.entry(cat).or_default().push(i, u, threshold);
        }
    }
    Ok(EvalReport {
        metric,
        categories: by_cat
            .into_iter()
            .map(|(c, acc)| {
                (
                    c,
                    CategoryScore {
                        score: metric.score(&acc),
                        count: acc.n,
                    },
                )
            })
            .collect(),
        overall: metric.score(&overall),
        n: overall.n,
    })
}

/// Aligned text table: one row per method, columns Stuff / Part / Multi /
/// Single / All, scores ×100 with one decimal. Empty categories print `-`.
pub fn format_table(rows: &[(String, EvalReport)]) -> String {
    let name_width = rows
        .iter()
        .map(|(n, _)| n.len())
        .chain(std::iter::once("Method".len()))
        .max()
        .unwrap_or(6);
    let mut out = String::new();
    if let Some((_, first)) = rows.first() {
        out.push_str(&format!("# {}\n", first.metric.label()));
    }
    out.push_str(&format!("{:<name_width$}", "Method"));
    for c in Category::ALL {
        out.push_str(&format!("  {:>6}", c.title()));
    }
    out.push_str(&format!("  {:>6}\n", "All"));
    for (name, rep) in rows {
        out.push_str(&format!("{name:<name_width$}"));
        for c in Category::ALL {
            match rep.categories.get(&c) {
                Some(s) => out.push_str(&format!("  {:>6.1}", s.score * 100.0)),
                None => out.push_str(&format!("  {:>6}", "-")),
            }
        }
        out.push_str(&format!("  {:>6.1}\n", rep.overall * 100.0));
    }
    out
}
