use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::mask::{BBox, RleMask};
use crate::metrics::Category;

/// One referring text / mask pair, the dataset row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferringSample {
    pub sample_id: String,
    pub image_id: String,
    pub image_uri: String,
    pub width: u32,
    pub height: u32,
    pub text: String,
    pub mask: RleMask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_iou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement: Option<Refinement>,
    pub provenance: Provenance,
}

/// Boundary refinement record: the mask before refinement and its IoU
/// with the refined mask now stored in `mask`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub coarse_mask: RleMask,
    pub iou: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub pipeline_version: String,
    pub template_version: String,
    /// Backend identifier per model role.
    #[serde(default)]
    pub backends: BTreeMap<String, String>,
    #[serde(default)]
    pub word_count: u32,
    /// Source phrase from phrase grounding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phrase: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grounder_confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// Whitespace-delimited word count.
pub fn word_count(text: &str) -> u32 {
    text.split_whitespace().count() as u32
}

/// A record that can live in a shard set.
pub trait Keyed {
    fn key(&self) -> &str;
}

impl Keyed for ReferringSample {
    fn key(&self) -> &str {
        &self.sample_id
    }
}
