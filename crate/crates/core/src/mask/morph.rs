//! Binary morphology with a square structuring element of radius `r`
//! (a `(2r+1)x(2r+1)` Chebyshev ball), via a summed-area table.
//!
//! Pixels outside the grid count as background: dilation is clipped at the
//! edge and erosion removes anything within `r` of the border.

use super::{BinaryMask, MaskError};

struct Integral {
    width: usize,
    sums: Vec<u32>,
}

impl Integral {
    fn new(mask: &BinaryMask) -> Self {
        let w = mask.width() as usize;
        let h = mask.height() as usize;
        let stride = w + 1;
        let mut sums = vec![0u32; stride * (h + 1)];
        let bits = mask.bits();
        for row in 0..h {
            let mut acc = 0u32;
            for col in 0..w {
                acc += bits[row * w + col] as u32;
                sums[(row + 1) * stride + col + 1] = sums[row * stride + col + 1] + acc;
            }
        }
        Self { width: w, sums }
    }

    /// Set pixels in rows `r0..r1`, cols `c0..c1`.
    fn count(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> u32 {
        let s = self.width + 1;
        self.sums[r1 * s + c1] + self.sums[r0 * s + c0] - self.sums[r0 * s + c1] - self.sums[r1 * s + c0]
    }
}

fn window_map(mask: &BinaryMask, radius: u32, keep: impl Fn(u32, u32) -> bool) -> Result<BinaryMask, MaskError> {
    if radius == 0 {
        return Err(MaskError::InvalidBand);
    }
    let table = Integral::new(mask);
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let r = radius as usize;
    let full = ((2 * r + 1) * (2 * r + 1)) as u32;
    let mut bits = Vec::with_capacity(w * h);
    for row in 0..h {
        let (r0, r1) = (row.saturating_sub(r), (row + r + 1).min(h));
        for col in 0..w {
            let (c0, c1) = (col.saturating_sub(r), (col + r + 1).min(w));
            bits.push(keep(table.count(r0, r1, c0, c1), full));
        }
    }
    BinaryMask::from_bits(mask.width(), mask.height(), bits)
}

pub fn dilate(mask: &BinaryMask, radius: u32) -> Result<BinaryMask, MaskError> {
    window_map(mask, radius, |n, _| n > 0)
}

pub fn erode(mask: &BinaryMask, radius: u32) -> Result<BinaryMask, MaskError> {
    window_map(mask, radius, |n, full| n == full)
}
