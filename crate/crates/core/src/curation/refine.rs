use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use super::{CurationError, FLAG_REFINE_DIVERGENT, FLAG_REFINE_SKIPPED};
use crate::datastore::{ReferringSample, Refinement};
use crate::gateway::{Gateway, ImageRef};
use crate::mask::{binarize_alpha, default_band, mask_iou, rle_decode, rle_encode, trimap_from_mask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    /// Trimap band in pixels; `None` scales with the image size.
    pub band: Option<u32>,
    pub alpha_threshold: f32,
    /// Below this IoU between coarse and refined masks the sample is
    /// flagged for a closer look.
    pub divergence_iou: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            band: None,
            alpha_threshold: 0.5,
            divergence_iou: 0.5,
        }
    }
}

fn flag(sample: &mut ReferringSample, f: &str) {
    if !sample.provenance.flags.iter().any(|x| x == f) {
        sample.provenance.flags.push(f.to_string());
    }
}

/// Replace the mask by its matted version, keeping the coarse mask and the
/// IoU between the two. A matting failure keeps the coarse mask and flags
/// the sample.
pub async fn refine_boundary(
    gw: &Gateway,
    mut sample: ReferringSample,
    config: &RefineConfig,
) -> Result<ReferringSample, CurationError> {
    let mask_err = |e: crate::mask::MaskError| CurationError::Mask {
        sample_id: sample.sample_id.clone(),
        detail: e.to_string(),
    };
    let coarse = rle_decode(&sample.mask).map_err(mask_err)?;
    if coarse.is_empty() {
        return Err(CurationError::EmptyMask(sample.sample_id));
    }
    let band = config
        .band
        .unwrap_or_else(|| default_band(coarse.width(), coarse.height()));
    let trimap = trimap_from_mask(&coarse, band).map_err(mask_err)?;
    let image = ImageRef::new(&sample.image_id, &sample.image_uri, sample.width, sample.height);
    let alpha = match gw.matte(&image, &trimap).await {
        Ok(a) => a,
        Err(e) => {
            tracing::warn!(sample_id = %sample.sample_id, error = %e, "matting failed, keeping coarse mask");
            flag(&mut sample, FLAG_REFINE_SKIPPED);
            return Ok(sample);
        }
    };
    let refined = binarize_alpha(&alpha, config.alpha_threshold);
    let iou = mask_iou(&coarse, &refined).map_err(mask_err)?;
    if iou < config.divergence_iou {
        flag(&mut sample, FLAG_REFINE_DIVERGENT);
    }
    sample.refinement = Some(Refinement {
        coarse_mask: std::mem::replace(&mut sample.mask, rle_encode(&refined)),
        iou,
    });
    Ok(sample)
}

/// Refine many samples concurrently, preserving order.
pub async fn refine_all(
    gw: &Gateway,
    samples: Vec<ReferringSample>,
    config: &RefineConfig,
    concurrency: usize,
) -> Result<Vec<ReferringSample>, CurationError> {
    stream::iter(samples)
        .map(|s| refine_boundary(gw, s, config))
        .buffered(concurrency.max(1))
        .collect::<Vec<_>>()
        .await
        .into_iter()
        .collect()
}
