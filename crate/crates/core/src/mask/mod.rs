//! Dense and run-length masks and the geometric kernels shared by every stage:
//! IoU, union, morphology, trimaps and tight boxes.
//!
//! Dense masks are stored row-major. Run-length masks follow the usual
//! segmentation interchange convention: column-major traversal, the first run
//! counts background pixels.

mod bbox;
mod morph;
mod rle;
mod trimap;

pub use bbox::{box_iou, tight_bbox, BBox};
pub use morph::{dilate, erode};
pub use rle::{rle_decode, rle_encode, rle_overlap, RleMask};
pub use trimap::{default_band, trimap_from_mask, AlphaMatte, Trimap, TrimapLabel, ValueRuns};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MaskError {
    #[error("invalid mask dimensions {width}x{height}")]
    InvalidDimensions { width: u32, height: u32 },
    #[error("pixel buffer has {actual} entries, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("dimension mismatch: {a_width}x{a_height} vs {b_width}x{b_height}")]
    DimensionMismatch {
        a_width: u32,
        a_height: u32,
        b_width: u32,
        b_height: u32,
    },
    #[error("run lengths sum to {actual}, expected {expected}")]
    SumMismatch { expected: u64, actual: u64 },
    #[error("zero-length run at position {index}")]
    ZeroRun { index: usize },
    #[error("empty mask list")]
    EmptyList,
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("invalid box [{xmin}, {ymin}, {xmax}, {ymax}]")]
    InvalidBox { xmin: i64, ymin: i64, xmax: i64, ymax: i64 },
    #[error("morphology band must be at least 1")]
    InvalidBand,
    #[error("invalid trimap label code {code}")]
    InvalidLabel { code: u8 },
}

/// Row-major boolean pixel grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(width: u32, height: u32) -> Result<Self, MaskError> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        })
    }

    pub fn full(width: u32, height: u32) -> Result<Self, MaskError> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            bits: vec![true; width as usize * height as usize],
        })
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, MaskError> {
        check_dims(width, height)?;
        let expected = width as usize * height as usize;
        if bits.len() != expected {
            return Err(MaskError::LengthMismatch {
                expected,
                actual: bits.len(),
            });
        }
        Ok(Self { width, height, bits })
    }

    /// Mask whose foreground is exactly the interior of `bbox`, clipped to the grid.
    pub fn from_box(width: u32, height: u32, bbox: &BBox) -> Result<Self, MaskError> {
        let mut mask = Self::empty(width, height)?;
        let x1 = bbox.xmax.min(width);
        let y1 = bbox.ymax.min(height);
        for row in bbox.ymin.min(height)..y1 {
            for col in bbox.xmin.min(width)..x1 {
                mask.set(row, col, true);
            }
        }
        Ok(mask)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn into_bits(self) -> Vec<bool> {
        self.bits
    }

    #[inline]
    pub fn get(&self, row: u32, col: u32) -> bool {
        self.bits[row as usize * self.width as usize + col as usize]
    }

    #[inline]
    pub fn set(&mut self, row: u32, col: u32, value: bool) {
        let idx = row as usize * self.width as usize + col as usize;
        self.bits[idx] = value;
    }

    /// Number of foreground pixels.
    pub fn area(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn same_shape(&self, other: &BinaryMask) -> Result<(), MaskError> {
        if self.width != other.width || self.height != other.height {
            return Err(MaskError::DimensionMismatch {
                a_width: self.width,
                a_height: self.height,
                b_width: other.width,
                b_height: other.height,
            });
        }
        Ok(())
    }

    /// `(|a ∩ b|, |a ∪ b|)` in pixels.
    pub fn overlap(&self, other: &BinaryMask) -> Result<(u64, u64), MaskError> {
        self.same_shape(other)?;
        let mut inter = 0u64;
        let mut union = 0u64;
        for (&a, &b) in self.bits.iter().zip(&other.bits) {
            inter += (a & b) as u64;
            union += (a | b) as u64;
        }
        Ok((inter, union))
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// Iterator over `(row, col)` of foreground pixels in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i / w) as u32, (i % w) as u32))
    }
}

fn check_dims(width: u32, height: u32) -> Result<(), MaskError> {
    if width == 0 || height == 0 {
        return Err(MaskError::InvalidDimensions { width, height });
    }
    Ok(())
}

/// IoU from pixel counts. An empty union means both masks are empty, which
/// scores 1.0; one-sided emptiness falls out naturally as 0.0.
#[inline]
pub fn iou_from_counts(intersection: u64, union: u64) -> f64 {
    if union == 0 {
        1.0
    } else {
        intersection as f64 / union as f64
    }
}

pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MaskError> {
    let (inter, union) = a.overlap(b)?;
    Ok(iou_from_counts(inter, union))
}

/// Pixel-wise OR over a non-empty list of equally sized masks.
pub fn union_masks(masks: &[BinaryMask]) -> Result<BinaryMask, MaskError> {
    let (first, rest) = masks.split_first().ok_or(MaskError::EmptyList)?;
    let mut out = first.clone();
    for m in rest {
        out.same_shape(m)?;
        for (o, &b) in out.bits.iter_mut().zip(&m.bits) {
            *o |= b;
        }
    }
    Ok(out)
}

/// Threshold a matting result; `alpha >= threshold` is foreground.
pub fn binarize_alpha(alpha: &AlphaMatte, threshold: f32) -> BinaryMask {
    assert!(threshold > 0.0 && threshold < 1.0, "alpha threshold must lie in (0, 1)");
    BinaryMask {
        width: alpha.width(),
        height: alpha.height(),
        bits: alpha.values().iter().map(|&a| a >= threshold).collect(),
    }
}


#[cfg(test)]
mod tests {
    use super::testutil::rect;
    use super::*;
    use proptest::prelude::*;

    fn brute_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
        let mut i = 0;
        let mut u = 0;
        for r in 0..a.height() {
            for c in 0..a.width() {
                let (x, y) = (a.get(r, c), b.get(r, c));
                if x && y {
                    i += 1;
                }
                if x || y {
                    u += 1;
                }
            }
        }
        if u == 0 {
            1.0
        } else {
            i as f64 / u as f64
        }
    }

    fn arb_mask(max: u32) -> impl Strategy<Value = BinaryMask> {
        (1..=max, 1..=max).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<bool>(), (w * h) as usize)
                .prop_map(move |bits| BinaryMask::from_bits(w, h, bits).unwrap())
        })
    }

    fn arb_pair(max: u32) -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
        (1..=max, 1..=max).prop_flat_map(|(w, h)| {
            let n = (w * h) as usize;
            (
                proptest::collection::vec(any::<bool>(), n),
                proptest::collection::vec(any::<bool>(), n),
            )
                .prop_map(move |(a, b)| {
                    (
                        BinaryMask::from_bits(w, h, a).unwrap(),
                        BinaryMask::from_bits(w, h, b).unwrap(),
                    )
                })
        })
    }

    fn arb_triple(max: u32) -> impl Strategy<Value = (BinaryMask, BinaryMask, BinaryMask)> {
        (1..=max, 1..=max).prop_flat_map(|(w, h)| {
            let bits = || proptest::collection::vec(any::<bool>(), (w * h) as usize);
            (bits(), bits(), bits()).prop_map(move |(a, b, c)| {
                (
                    BinaryMask::from_bits(w, h, a).unwrap(),
                    BinaryMask::from_bits(w, h, b).unwrap(),
                    BinaryMask::from_bits(w, h, c).unwrap(),
                )
            })
        })
    }

    #[test]
    fn rejects_zero_dimensions() {
        assert!(matches!(
            BinaryMask::empty(0, 3),
            Err(MaskError::InvalidDimensions { .. })
        ));
        assert!(matches!(
            BinaryMask::from_bits(2, 2, vec![true; 3]),
            Err(MaskError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn iou_identity_and_disjoint() {
        let a = rect(10, 10, 0, 4, 0, 4);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        let b = rect(10, 10, 6, 10, 6, 10);
        assert_eq!(mask_iou(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn iou_overlapping_squares() {
        let a = rect(10, 10, 0, 4, 0, 4);
        let b = rect(10, 10, 2, 6, 2, 6);
        assert_eq!(brute_iou(&a, &b), 4.0 / 28.0);
        assert_eq!(mask_iou(&a, &b).unwrap(), 4.0 / 28.0);
    }

    #[test]
    fn iou_empty_conventions() {
        let e = BinaryMask::empty(5, 5).unwrap();
        let f = rect(5, 5, 1, 2, 1, 2);
        assert_eq!(mask_iou(&e, &e).unwrap(), 1.0);
        assert_eq!(mask_iou(&e, &f).unwrap(), 0.0);
        assert_eq!(mask_iou(&f, &e).unwrap(), 0.0);
    }

    #[test]
    fn iou_dimension_mismatch() {
        let a = BinaryMask::empty(4, 5).unwrap();
        let b = BinaryMask::empty(5, 4).unwrap();
        assert!(matches!(mask_iou(&a, &b), Err(MaskError::DimensionMismatch { .. })));
    }

    #[test]
    fn union_examples() {
        let m = rect(8, 8, 1, 3, 1, 3);
        assert_eq!(union_masks(std::slice::from_ref(&m)).unwrap(), m);
        let e = BinaryMask::empty(8, 8).unwrap();
        assert_eq!(union_masks(&[m.clone(), e]).unwrap(), m);
        let other = rect(8, 8, 5, 7, 5, 7);
        assert_eq!(union_masks(&[m, other]).unwrap().area(), 8);
        assert_eq!(union_masks(&[]), Err(MaskError::EmptyList));
        let wrong = BinaryMask::empty(4, 8).unwrap();
        assert!(matches!(
            union_masks(&[BinaryMask::empty(8, 8).unwrap(), wrong]),
            Err(MaskError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn binarize_is_inclusive() {
        let ones = AlphaMatte::new(3, 2, vec![1.0; 6]).unwrap();
        assert_eq!(binarize_alpha(&ones, 0.5).area(), 6);
        let zeros = AlphaMatte::new(3, 2, vec![0.0; 6]).unwrap();
        assert!(binarize_alpha(&zeros, 0.5).is_empty());
        let half = AlphaMatte::new(1, 1, vec![0.5]).unwrap();
        assert!(binarize_alpha(&half, 0.5).get(0, 0));
    }

    proptest! {
        #[test]
        fn iou_matches_brute_force((a, b) in arb_pair(32)) {
            prop_assert_eq!(mask_iou(&a, &b).unwrap(), brute_iou(&a, &b));
        }

        #[test]
        fn iou_symmetric_and_reflexive((a, b) in arb_pair(16)) {
            prop_assert_eq!(mask_iou(&a, &b).unwrap(), mask_iou(&b, &a).unwrap());
            if !a.is_empty() {
                prop_assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
            }
        }

        #[test]
        fn union_laws((a, b, c) in arb_triple(12)) {
            let ab_c = union_masks(&[union_masks(&[a.clone(), b.clone()]).unwrap(), c.clone()]).unwrap();
            let a_bc = union_masks(&[a.clone(), union_masks(&[b.clone(), c]).unwrap()]).unwrap();
            prop_assert_eq!(&ab_c, &a_bc);
            prop_assert_eq!(
                union_masks(&[a.clone(), b.clone()]).unwrap(),
                union_masks(&[b, a.clone()]).unwrap()
            );
            prop_assert_eq!(union_masks(&[a.clone(), a.clone()]).unwrap(), a);
        }

        #[test]
        fn complement_partitions(m in arb_mask(16)) {
            let c = m.complement();
            prop_assert_eq!(m.area() + c.area(), (m.width() * m.height()) as u64);
        }
    }
}
