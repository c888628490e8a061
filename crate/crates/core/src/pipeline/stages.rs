use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use futures::future::join_all;

use super::journal::JournalEntry;
use super::{
    sample_id, FailureRecord, ImageState, ManifestEntry, PipelineConfig, RejectRecord, StageTiming, PIPELINE_VERSION,
    REASON_FILTER_ERROR, REASON_LOW_IOU,
};
use crate::datastore::{word_count, Provenance, ReferringSample};
use crate::gateway::{Gateway, GatewayError, ImageRef, Role};
use crate::mask::{mask_iou, rle_encode, BBox, BinaryMask};

/// A phrase's box with the mask segmented from it.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundedRegion {
    pub phrase: String,
    pub bbox: BBox,
    pub mask: BinaryMask,
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterVerdict {
    Kept { iou: f64 },
    Dropped { iou: f64 },
}

impl FilterVerdict {
    pub fn iou(&self) -> f64 {
        match *self {
            FilterVerdict::Kept { iou } | FilterVerdict::Dropped { iou } => iou,
        }
    }
}

/// Re-segment `text` and compare with `mask`; kept iff IoU ≥ `threshold`.
pub async fn filter_sample(
    gw: &Gateway,
    image: &ImageRef,
    text: &str,
    mask: &BinaryMask,
    threshold: f64,
) -> Result<FilterVerdict, GatewayError> {
    let predicted = gw.refer_segment(image, text).await?;
    let iou = mask_iou(&predicted, mask).map_err(|e| GatewayError::malformed(Role::Referrer, e))?;
    Ok(if iou >= threshold {
        FilterVerdict::Kept { iou }
    } else {
        FilterVerdict::Dropped { iou }
    })
}

pub(crate) fn image_ref(entry: &ManifestEntry) -> ImageRef {
    ImageRef::new(&entry.image_id, &entry.uri, entry.width, entry.height)
}

fn failure(entry: &ManifestEntry, stage: &str, err: GatewayError) -> JournalEntry {
    JournalEntry::failed(
        &entry.image_id,
        FailureRecord {
            image_id: entry.image_id.clone(),
            stage: stage.to_string(),
            error: err.to_string(),
        },
    )
}

pub(crate) struct Localized {
    pub caption: String,
    /// Indexed by region ordinal; `None` where segmentation came back empty.
    pub regions: Vec<Option<GroundedRegion>>,
}

pub(crate) async fn localize(gw: &Gateway, entry: &ManifestEntry) -> Result<Localized, JournalEntry> {
    let image = image_ref(entry);
    let caption = gw.caption(&image).await.map_err(|e| failure(entry, "caption", e))?;
    let phrases = gw
        .ground_phrases(&image, &caption)
        .await
        .map_err(|e| failure(entry, "ground", e))?;
    let mut seen = BTreeSet::new();
    let boxes: Vec<_> = phrases
        .into_iter()
        .filter(|p| seen.insert(p.phrase.to_lowercase()))
        .flat_map(|p| p.boxes.into_iter().map(move |b| (p.phrase.clone(), b)))
        .collect();
    let masks = join_all(boxes.iter().map(|(_, b)| gw.segment_box(&image, &b.bbox))).await;
    let mut regions = Vec::with_capacity(boxes.len());
    for ((phrase, b), mask) in boxes.into_iter().zip(masks) {
        let mask = mask.map_err(|e| failure(entry, "segment", e))?;
        regions.push((!mask.is_empty()).then_some(GroundedRegion {
            phrase,
            bbox: b.bbox,
            mask,
            confidence: b.confidence,
        }));
    }
    Ok(Localized { caption, regions })
}

pub(crate) struct Generated {
    pub ordinal: usize,
    pub region: GroundedRegion,
    pub text: String,
}

pub(crate) async fn generate(
    gw: &Gateway,
    entry: &ManifestEntry,
    localized: Localized,
) -> Result<(usize, Vec<Generated>), JournalEntry> {
    let image = image_ref(entry);
    let n = localized.regions.len();
    let texts = join_all(localized.regions.iter().map(|r| async {
        match r {
            Some(r) => Some(gw.describe_region(&image, &localized.caption, &r.phrase, &r.bbox).await),
            None => None,
        }
    }))
    .await;
    let mut out = Vec::new();
    for (ordinal, (region, text)) in localized.regions.into_iter().zip(texts).enumerate() {
        let (Some(region), Some(text)) = (region, text) else {
            continue;
        };
        match text {
            Ok(text) => out.push(Generated { ordinal, region, text }),
            Err(GatewayError::EmptyGeneration) => {}
            Err(e) => return Err(failure(entry, "describe", e)),
        }
    }
    Ok((n, out))
}

pub(crate) async fn filter(
    gw: &Gateway,
    entry: &ManifestEntry,
    config: &PipelineConfig,
    regions: usize,
    generated: Vec<Generated>,
) -> JournalEntry {
    let image = image_ref(entry);
    let template_version = gw.templates().version.clone();
    let backends: BTreeMap<String, String> = [Role::Captioner, Role::Grounder, Role::Segmenter, Role::Referrer]
        .into_iter()
        .map(|r| (r.to_string(), gw.backend_id(r)))
        .collect();
    let verdicts = join_all(
        generated
            .iter()
            .map(|g| filter_sample(gw, &image, &g.text, &g.region.mask, config.filter_iou_threshold)),
    )
    .await;
    let mut result = JournalEntry {
        image_id: entry.image_id.clone(),
        state: ImageState::Done,
        regions: regions as u64,
        generated: generated.len() as u64,
        samples: Vec::new(),
        rejects: Vec::new(),
        failure: None,
    };
    for (g, verdict) in generated.into_iter().zip(verdicts) {
        let id = sample_id(&entry.image_id, g.ordinal, &template_version);
        match verdict {
            Err(e) => {
                tracing::warn!(sample_id = %id, error = %e, "filter failed");
                result.rejects.push(RejectRecord {
                    sample_id: id,
                    reason: REASON_FILTER_ERROR.into(),
                    filter_iou: None,
                });
            }
            Ok(FilterVerdict::Dropped { iou }) => result.rejects.push(RejectRecord {
                sample_id: id,
                reason: REASON_LOW_IOU.into(),
                filter_iou: Some(iou),
            }),
            Ok(FilterVerdict::Kept { iou }) => {
                let words = word_count(&g.text);
                let mut flags = Vec::new();
                if config.min_words.is_some_and(|m| words < m) {
                    flags.push("short_text".to_string());
                }
                if config.max_words.is_some_and(|m| words > m) {
                    flags.push("long_text".to_string());
                }
                result.samples.push(ReferringSample {
                    sample_id: id,
                    image_id: entry.image_id.clone(),
                    image_uri: entry.uri.clone(),
                    width: entry.width,
                    height: entry.height,
                    text: g.text,
                    mask: rle_encode(&g.region.mask),
                    bbox: Some(g.region.bbox),
                    category: None,
                    filter_iou: Some(iou),
                    refinement: None,
                    provenance: Provenance {
                        pipeline_version: PIPELINE_VERSION.to_string(),
                        template_version: template_version.clone(),
                        backends: backends.clone(),
                        word_count: words,
                        phrase: Some(g.region.phrase),
                        grounder_confidence: g.region.confidence,
                        flags,
                    },
                });
            }
        }
    }
    result
}

pub(crate) fn no_entities(entry: &ManifestEntry) -> JournalEntry {
    JournalEntry {
        image_id: entry.image_id.clone(),
        state: ImageState::NoEntities,
        regions: 0,
        generated: 0,
        samples: Vec::new(),
        rejects: Vec::new(),
        failure: None,
    }
}

/// All three stages for one image, adding elapsed time to `timing`.
pub(crate) async fn process_image(
    gw: &Gateway,
    entry: &ManifestEntry,
    config: &PipelineConfig,
    timing: &mut StageTiming,
) -> JournalEntry {
    let t = Instant::now();
    let localized = localize(gw, entry).await;
    timing.localize_secs += t.elapsed().as_secs_f64();
    let localized = match localized {
        Ok(l) if l.regions.is_empty() => return no_entities(entry),
        Ok(l) => l,
        Err(f) => return f,
    };
    let t = Instant::now();
    let generated = generate(gw, entry, localized).await;
    timing.generate_secs += t.elapsed().as_secs_f64();
    let (n, generated) = match generated {
        Ok(g) => g,
        Err(f) => return f,
    };
    let t = Instant::now();
    let out = filter(gw, entry, config, n, generated).await;
    timing.filter_secs += t.elapsed().as_secs_f64();
    out
}
