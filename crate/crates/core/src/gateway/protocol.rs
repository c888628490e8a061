//! Request and response bodies for `POST /v1/{role}`.
//!
//! | role       | request                                  | response                                   |
//! |------------|------------------------------------------|--------------------------------------------|
//! | captioner  | `{image, prompt?, bbox?}`                | `{text}`                                   |
//! | grounder   | `{image, caption, prompt?}`              | `{phrases: [{phrase, boxes, scores?}]}`    |
//! | segmenter  | `{image, bbox}`                          | `{mask}`                                   |
//! | referrer   | `{image, text, prompt?}`                 | `{mask}`                                   |
//! | classifier | `{image, text, mask_rle, prompt?}`       | `{referring_correct, category}`            |
//! | matter     | `{image, trimap_rle3}`                   | `{alpha}`                                  |
//!
//! Masks use the run-length JSON form; trimaps and alpha mattes use
//! [`ValueRuns`] (trimap codes 0 background, 1 unknown, 2 foreground).
//! A captioner request carrying a `bbox` asks for a referring expression
//! for that region rather than a scene caption.

use serde::{Deserialize, Serialize};

use crate::mask::RleMask;
pub use crate::mask::ValueRuns;

/// An image as passed to backends: by URL or inline base64, with its size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b64: Option<String>,
    pub width: u32,
    pub height: u32,
}

impl ImageRef {
    pub fn new(id: impl Into<String>, url: impl Into<String>, width: u32, height: u32) -> Self {
        Self {
            id: id.into(),
            url: Some(url.into()),
            b64: None,
            width,
            height,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaptionRequest {
    pub image: ImageRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[u32; 4]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaptionResponse {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundRequest {
    pub image: ImageRef,
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WirePhrase {
    pub phrase: String,
    pub boxes: Vec<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundResponse {
    pub phrases: Vec<WirePhrase>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub image: ImageRef,
    pub bbox: [u32; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskResponse {
    pub mask: RleMask,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferRequest {
    pub image: ImageRef,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub image: ImageRef,
    pub text: String,
    pub mask_rle: RleMask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub referring_correct: bool,
    pub category: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatteRequest {
    pub image: ImageRef,
    pub trimap_rle3: ValueRuns<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatteResponse {
    pub alpha: ValueRuns<f32>,
}
