//! Disambiguation of grounding-model box coordinates.
//!
//! Replies may use absolute pixels or normalized `[0, 1]` coordinates. A
//! reply is treated as normalized when every coordinate is ≤ 1.5 and the
//! image's longer side exceeds 2 px; it is then scaled by the image size.

use crate::mask::BBox;

const NORMALIZED_LIMIT: f64 = 1.5;
const SNAP_EPS: f64 = 1e-6;

pub fn detect_normalized(boxes: &[[f64; 4]], width: u32, height: u32) -> bool {
    width.max(height) > 2 && !boxes.is_empty() && boxes.iter().flatten().all(|&v| v <= NORMALIZED_LIMIT)
}

/// Convert a whole reply to pixel-space floats.
pub fn normalize_boxes(boxes: &[[f64; 4]], width: u32, height: u32) -> Vec<[f64; 4]> {
    if !detect_normalized(boxes, width, height) {
        return boxes.to_vec();
    }
    let (w, h) = (width as f64, height as f64);
    boxes.iter().map(|b| [b[0] * w, b[1] * h, b[2] * w, b[3] * h]).collect()
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP_EPS {
        r
    } else {
        v
    }
}

/// Pixel-space float box to the smallest covering half-open integer box,
/// clipped to the image. `None` when nothing of positive area remains.
pub fn snap_to_pixels(b: [f64; 4], width: u32, height: u32) -> Option<BBox> {
    if b.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let clamp = |v: f64, hi: u32| v.clamp(0.0, hi as f64) as u32;
    let x0 = clamp(snap(b[0]).floor(), width);
    let y0 = clamp(snap(b[1]).floor(), height);
    let x1 = clamp(snap(b[2]).ceil(), width);
    let y1 = clamp(snap(b[3]).ceil(), height);
    BBox::new(x0, y0, x1, y1).ok()
}
