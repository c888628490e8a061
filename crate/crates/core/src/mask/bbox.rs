use serde::{Deserialize, Serialize};

use super::{BinaryMask, MaskError};

/// Half-open integer pixel box: `xmin <= x < xmax`, `ymin <= y < ymax`.
///
/// Serialized as `[xmin, ymin, xmax, ymax]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u32; 4]", into = "[u32; 4]")]
pub struct BBox {
    pub xmin: u32,
    pub ymin: u32,
    pub xmax: u32,
    pub ymax: u32,
}

impl BBox {
    pub fn new(xmin: u32, ymin: u32, xmax: u32, ymax: u32) -> Result<Self, MaskError> {
        if xmin >= xmax || ymin >= ymax {
            return Err(MaskError::InvalidBox {
                xmin: xmin as i64,
                ymin: ymin as i64,
                xmax: xmax as i64,
                ymax: ymax as i64,
            });
        }
        Ok(Self { xmin, ymin, xmax, ymax })
    }

    pub fn width(&self) -> u32 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> u32 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn intersection_area(&self, other: &BBox) -> u64 {
        let w = self.xmax.min(other.xmax).saturating_sub(self.xmin.max(other.xmin));
        let h = self.ymax.min(other.ymax).saturating_sub(self.ymin.max(other.ymin));
        w as u64 * h as u64
    }

    pub fn contains_pixel(&self, row: u32, col: u32) -> bool {
        col >= self.xmin && col < self.xmax && row >= self.ymin && row < self.ymax
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.xmax <= width && self.ymax <= height
    }

    /// Clip to a `width x height` grid; `None` if nothing is left.
    pub fn clip(&self, width: u32, height: u32) -> Option<BBox> {
        BBox::new(
            self.xmin.min(width),
            self.ymin.min(height),
            self.xmax.min(width),
            self.ymax.min(height),
        )
        .ok()
    }

    pub fn to_array(self) -> [u32; 4] {
        [self.xmin, self.ymin, self.xmax, self.ymax]
    }
}

impl TryFrom<[u32; 4]> for BBox {
    type Error = MaskError;

    fn try_from(v: [u32; 4]) -> Result<Self, MaskError> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [u32; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// Smallest half-open box containing every foreground pixel.
pub fn tight_bbox(mask: &BinaryMask) -> Result<BBox, MaskError> {
    let mut xmin = u32::MAX;
    let mut ymin = u32::MAX;
    let mut xmax = 0;
    let mut ymax = 0;
    let mut any = false;
    for (row, col) in mask.foreground() {
        any = true;
        xmin = xmin.min(col);
        ymin = ymin.min(row);
        xmax = xmax.max(col + 1);
        ymax = ymax.max(row + 1);
    }
    if !any {
        return Err(MaskError::EmptyMask);
    }
    BBox::new(xmin, ymin, xmax, ymax)
}
