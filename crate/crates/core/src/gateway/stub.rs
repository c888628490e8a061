//! Deterministic stand-in for all six roles.
//!
//! Every reply is a pure function of the seed, the image id and the request.
//! An image gets `k = 1 + h % 4` objects named `object_a` .. `object_d`,
//! each occupying one vertical strip of the image with a margin of one
//! eighth. Expressions mention the object token so the referrer can find it
//! again, and carry category keywords the classifier picks up.

use std::collections::BTreeMap;

use async_trait::async_trait;
use serde::de::DeserializeOwned;
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::protocol::*;
use super::transport::{Transport, TransportError};
use super::Role;
use crate::mask::{rle_encode, AlphaMatte, BBox, BinaryMask, Trimap, TrimapLabel};

/// First eight bytes of `sha256("{seed}\0{image_id}\0{salt}")`, big-endian.
pub fn stable_hash(seed: u64, image_id: &str, salt: &str) -> u64 {
    let digest = Sha256::digest(format!("{seed}\0{image_id}\0{salt}").as_bytes());
    u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubOptions {
    pub seed: u64,
    /// Boxes reported per phrase; each object box is cut into this many
    /// horizontal slices.
    pub boxes_per_phrase: u32,
    /// Rows the referrer drops from the bottom of its mask, per image id.
    pub shrink_rows: BTreeMap<String, u32>,
    /// Report grounder boxes in `[0, 1]` coordinates.
    pub normalized_coords: bool,
}

impl Default for StubOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            boxes_per_phrase: 1,
            shrink_rows: BTreeMap::new(),
            normalized_coords: false,
        }
    }
}

const TOKENS: [&str; 4] = ["object_a", "object_b", "object_c", "object_d"];
const ORDINALS: [&str; 4] = ["first", "second", "third", "fourth"];
const NOUNS: [[&str; 4]; 4] = [
    ["stretch of sky", "calm sea", "green lawn", "sandy beach"],
    [
        "dog's tail",
        "handle of a cup",
        "front wheel of a bicycle",
        "person's left hand",
    ],
    ["two dogs", "flock of birds", "group of people", "pair of shoes"],
    ["brown cat", "red car", "wooden chair", "small parrot"],
];
const ADJECTIVES: [&str; 4] = ["quiet", "bright", "plain", "distant"];
const CLAUSES: [&str; 4] = [
    "next to a low wall",
    "near the middle of the frame",
    "beside a patch of shade",
    "under soft light",
];
const KEYWORDS: [(&str, &[&str]); 3] = [
    ("multi", &["two ", "flock", "group", "pair"]),
    ("part", &["tail", "handle", "wheel", "hand"]),
    ("stuff", &["sky", "sea", "lawn", "beach"]),
];

fn positions(k: usize) -> &'static [&'static str] {
    match k {
        1 => &["center"],
        2 => &["left", "right"],
        3 => &["left", "center", "right"],
        _ => &["far left", "center left", "center right", "far right"],
    }
}

fn token_index(text: &str) -> Option<usize> {
    TOKENS.iter().position(|t| text.contains(t))
}

#[derive(Debug, Clone)]
pub struct StubBackend {
    opts: StubOptions,
}

impl StubBackend {
    pub fn new(opts: StubOptions) -> Self {
        Self { opts }
    }

    pub fn with_seed(seed: u64) -> Self {
        Self::new(StubOptions {
            seed,
            ..StubOptions::default()
        })
    }

    pub fn options(&self) -> &StubOptions {
        &self.opts
    }

    /// Number of objects placed in an image.
    pub fn object_count(&self, image_id: &str) -> usize {
        1 + (stable_hash(self.opts.seed, image_id, "layout") % 4) as usize
    }

    fn object_box(&self, image: &ImageRef, i: usize) -> BBox {
        let (w, h) = (image.width, image.height);
        let k = self.object_count(&image.id) as u32;
        let i = i as u32;
        let sw = w / k;
        let (x0, x1) = (i * sw + sw / 8, (i + 1) * sw - sw / 8);
        let (y0, y1) = (h / 8, h - h / 8);
        let (x0, x1) = if x1 > x0 {
            (x0, x1)
        } else {
            (i * sw, ((i + 1) * sw).max(i * sw + 1).min(w))
        };
        let (y0, y1) = if y1 > y0 { (y0, y1) } else { (0, h) };
        BBox::new(x0, y0, x1, y1).expect("object boxes are non-empty")
    }

    fn sub_boxes(&self, image: &ImageRef, i: usize) -> Vec<BBox> {
        let b = self.object_box(image, i);
        let n = self.opts.boxes_per_phrase.max(1);
        let h = b.height();
        (0..n)
            .filter_map(|j| BBox::new(b.xmin, b.ymin + h * j / n, b.xmax, b.ymin + h * (j + 1) / n).ok())
            .collect()
    }

    fn caption(&self, image: &ImageRef) -> String {
        let k = self.object_count(&image.id);
        let parts: Vec<String> = positions(k)
            .iter()
            .enumerate()
            .map(|(i, pos)| format!("{} at {pos}", TOKENS[i]))
            .collect();
        format!("a scene with {}", parts.join(", "))
    }

    /// The object is the one whose box overlaps the request box most; the
    /// prompt must still name some object token.
    fn describe(&self, image: &ImageRef, prompt: &str, bbox: [u32; 4]) -> String {
        let Ok(req) = BBox::new(bbox[0], bbox[1], bbox[2], bbox[3]) else {
            return String::new();
        };
        if token_index(prompt).is_none() {
            return String::new();
        }
        let Some((i, _)) = (0..self.object_count(&image.id))
            .map(|i| (i, self.object_box(image, i).intersection_area(&req)))
            .filter(|&(_, a)| a > 0)
            .max_by_key(|&(i, a)| (a, std::cmp::Reverse(i)))
        else {
            return String::new();
        };
        let token = TOKENS[i];
        let h = |salt: &str| stable_hash(self.opts.seed, &image.id, &format!("{salt}:{token}")) as usize;
        let noun = NOUNS[h("kind") % 4][h("noun") % 4];
        let adj = ADJECTIVES[h("adj") % 4];
        let clause = CLAUSES[h("clause") % 4];
        let pos = positions(self.object_count(&image.id))[i];
        let mut text = format!("the {adj} {noun} {token} on the {pos} side of the scene, {clause}");
        let subs = self.sub_boxes(image, i);
        if subs.len() > 1 {
            let j = subs.iter().position(|b| b.to_array() == bbox).unwrap_or(0);
            text.push_str(&format!(", the {} one from the top", ORDINALS[j.min(3)]));
        }
        text
    }

    fn ground(&self, image: &ImageRef, caption: &str) -> GroundResponse {
        let k = self.object_count(&image.id);
        let mut found: Vec<(usize, usize)> = TOKENS[..k]
            .iter()
            .enumerate()
            .filter_map(|(i, t)| caption.find(t).map(|at| (at, i)))
            .collect();
        found.sort();
        let (w, h) = (image.width as f64, image.height as f64);
        let phrases = found
            .into_iter()
            .map(|(_, i)| {
                let boxes = self
                    .sub_boxes(image, i)
                    .into_iter()
                    .map(|b| {
                        let a = b.to_array().map(f64::from);
                        if self.opts.normalized_coords {
                            [a[0] / w, a[1] / h, a[2] / w, a[3] / h]
                        } else {
                            a
                        }
                    })
                    .collect::<Vec<_>>();
                let score = 0.5 + (stable_hash(self.opts.seed, &image.id, TOKENS[i]) % 50) as f64 / 100.0;
                WirePhrase {
                    phrase: TOKENS[i].to_string(),
                    scores: Some(vec![score; boxes.len()]),
                    boxes,
                }
            })
            .collect();
        GroundResponse { phrases }
    }

    fn refer(&self, image: &ImageRef, text: &str) -> Result<BinaryMask, TransportError> {
        let blank = || BinaryMask::empty(image.width, image.height).map_err(rejected);
        let Some(i) = token_index(text).filter(|&i| i < self.object_count(&image.id)) else {
            return blank();
        };
        let subs = self.sub_boxes(image, i);
        let j = ORDINALS
            .iter()
            .position(|o| text.contains(&format!("the {o} one from the top")))
            .unwrap_or(0);
        let Some(b) = subs.get(j) else {
            return blank();
        };
        let shrink = self.opts.shrink_rows.get(&image.id).copied().unwrap_or(0);
        if shrink >= b.height() {
            return blank();
        }
        let kept = BBox::new(b.xmin, b.ymin, b.xmax, b.ymax - shrink).expect("non-empty");
        BinaryMask::from_box(image.width, image.height, &kept).map_err(rejected)
    }

    fn classify(text: &str, mask_area: u64) -> ClassifyResponse {
        let category = KEYWORDS
            .iter()
            .find(|(_, words)| words.iter().any(|w| text.contains(w)))
            .map(|(c, _)| *c)
            .unwrap_or("single");
        ClassifyResponse {
            referring_correct: mask_area > 0 && token_index(text).is_some(),
            category: category.to_string(),
        }
    }

    fn matte(trimap: &Trimap) -> Result<AlphaMatte, TransportError> {
        let values = trimap
            .labels()
            .iter()
            .map(|l| match l {
                TrimapLabel::Foreground => 1.0,
                TrimapLabel::Unknown => 0.5,
                TrimapLabel::Background => 0.0,
            })
            .collect();
        AlphaMatte::new(trimap.width(), trimap.height(), values).map_err(rejected)
    }

    /// Answer one request body as the given role would.
    pub fn handle(&self, role: Role, body: Value) -> Result<Value, TransportError> {
        let reply = match role {
            Role::Captioner => {
                let req: CaptionRequest = parse(body)?;
                let text = match req.bbox {
                    Some(b) => self.describe(&req.image, req.prompt.as_deref().unwrap_or(""), b),
                    None => self.caption(&req.image),
                };
                serde_json::to_value(CaptionResponse { text })
            }
            Role::Grounder => {
                let req: GroundRequest = parse(body)?;
                serde_json::to_value(self.ground(&req.image, &req.caption))
            }
            Role::Segmenter => {
                let req: SegmentRequest = parse(body)?;
                let [x0, y0, x1, y1] = req.bbox;
                let b = BBox::new(x0, y0, x1, y1).map_err(rejected)?;
                let m = BinaryMask::from_box(req.image.width, req.image.height, &b).map_err(rejected)?;
                serde_json::to_value(MaskResponse { mask: rle_encode(&m) })
            }
            Role::Referrer => {
                let req: ReferRequest = parse(body)?;
                let m = self.refer(&req.image, &req.text)?;
                serde_json::to_value(MaskResponse { mask: rle_encode(&m) })
            }
            Role::Classifier => {
                let req: ClassifyRequest = parse(body)?;
                serde_json::to_value(Self::classify(&req.text, req.mask_rle.area()))
            }
            Role::Matter => {
                let req: MatteRequest = parse(body)?;
                let trimap = Trimap::from_runs(&req.trimap_rle3).map_err(rejected)?;
                let alpha = Self::matte(&trimap)?;
                serde_json::to_value(MatteResponse { alpha: alpha.to_runs() })
            }
        };
        Ok(reply.expect("stub replies serialize"))
    }
}

fn rejected(e: impl std::fmt::Display) -> TransportError {
    TransportError::Rejected(e.to_string())
}

fn parse<T: DeserializeOwned>(body: Value) -> Result<T, TransportError> {
    serde_json::from_value(body).map_err(rejected)
}

#[async_trait]
impl Transport for StubBackend {
    async fn post(&self, role: Role, body: Value) -> Result<Value, TransportError> {
        self.handle(role, body)
    }

    fn backend_id(&self, role: Role) -> String {
        format!("stub-{role}-seed{}", self.opts.seed)
    }
}
