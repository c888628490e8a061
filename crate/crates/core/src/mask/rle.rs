use serde::{Deserialize, Serialize};

use super::{check_dims, BinaryMask, MaskError};

/// Column-major run-length mask. Runs alternate background/foreground and the
/// first run is always background (possibly zero-length).
///
/// Serialized as `{"size":[height,width],"counts":[...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RleJson", into = "RleJson")]
pub struct RleMask {
    width: u32,
    height: u32,
    runs: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct RleJson {
    size: [u32; 2],
    counts: Vec<u32>,
}

impl TryFrom<RleJson> for RleMask {
    type Error = MaskError;

    fn try_from(raw: RleJson) -> Result<Self, MaskError> {
        RleMask::new(raw.size[1], raw.size[0], raw.counts)
    }
}

impl From<RleMask> for RleJson {
    fn from(rle: RleMask) -> Self {
        RleJson {
            size: [rle.height, rle.width],
            counts: rle.runs,
        }
    }
}

impl RleMask {
    /// Validates the run list: total length must equal `width * height` and
    /// only the leading run may be zero.
    pub fn new(width: u32, height: u32, runs: Vec<u32>) -> Result<Self, MaskError> {
        check_dims(width, height)?;
        if let Some(index) = runs.iter().skip(1).position(|&r| r == 0) {
            return Err(MaskError::ZeroRun { index: index + 1 });
        }
        let expected = width as u64 * height as u64;
        let actual: u64 = runs.iter().map(|&r| r as u64).sum();
        if actual != expected {
            return Err(MaskError::SumMismatch { expected, actual });
        }
        Ok(Self { width, height, runs })
    }

    pub fn empty(width: u32, height: u32) -> Result<Self, MaskError> {
        Self::new(width, height, vec![width * height])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn runs(&self) -> &[u32] {
        &self.runs
    }

    /// Foreground pixel count, read straight off the odd runs.
    pub fn area(&self) -> u64 {
        self.runs.iter().skip(1).step_by(2).map(|&r| r as u64).sum()
    }

    /// Foreground runs as `(start, len)` flat column-major offsets.
    pub fn foreground_runs(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        let mut pos = 0u64;
        self.runs.iter().enumerate().filter_map(move |(i, &r)| {
            let start = pos;
            pos += r as u64;
            (i % 2 == 1).then_some((start, r as u64))
        })
    }

    /// Sum of foreground `(col, row)` coordinates, computed per run without
    /// decoding. Returns `(area, Σcol, Σrow)`.
    pub fn coordinate_sums(&self) -> (u64, u128, u128) {
        let h = self.height as u64;
        let mut area = 0u64;
        let mut sx = 0u128;
        let mut sy = 0u128;
        for (start, len) in self.foreground_runs() {
            area += len;
            let mut pos = start;
            let end = start + len;
            while pos < end {
                let col = pos / h;
                let row = pos % h;
                let seg = (h - row).min(end - pos);
                sx += col as u128 * seg as u128;
                // rows row..row+seg
                sy += (seg as u128) * (2 * row as u128 + seg as u128 - 1) / 2;
                pos += seg;
            }
        }
        (area, sx, sy)
    }
}

pub fn rle_encode(mask: &BinaryMask) -> RleMask {
    let (w, h) = (mask.width(), mask.height());
    let mut runs = Vec::new();
    let mut current = false;
    let mut count = 0u32;
    for col in 0..w {
        for row in 0..h {
            let v = mask.get(row, col);
            if v != current {
                runs.push(count);
                count = 0;
                current = v;
            }
            count += 1;
        }
    }
    runs.push(count);
    RleMask {
        width: w,
        height: h,
        runs,
    }
}

/// `(|a ∩ b|, |a ∪ b|)` by walking both run lists in lockstep.
pub fn rle_overlap(a: &RleMask, b: &RleMask) -> Result<(u64, u64), MaskError> {
    if a.width != b.width || a.height != b.height {
        return Err(MaskError::DimensionMismatch {
            a_width: a.width,
            a_height: a.height,
            b_width: b.width,
            b_height: b.height,
        });
    }
    let (mut ia, mut ib) = (0usize, 0usize);
    let (mut left_a, mut left_b) = (a.runs[0] as u64, b.runs[0] as u64);
    let (mut inter, mut union) = (0u64, 0u64);
    loop {
        while left_a == 0 && ia + 1 < a.runs.len() {
            ia += 1;
            left_a = a.runs[ia] as u64;
        }
        while left_b == 0 && ib + 1 < b.runs.len() {
            ib += 1;
            left_b = b.runs[ib] as u64;
        }
        if left_a == 0 || left_b == 0 {
            break;
        }
        let step = left_a.min(left_b);
        let (on_a, on_b) = (ia % 2 == 1, ib % 2 == 1);
        if on_a && on_b {
            inter += step;
        }
        if on_a || on_b {
            union += step;
        }
        left_a -= step;
        left_b -= step;
    }
    Ok((inter, union))
}

pub fn rle_decode(rle: &RleMask) -> Result<BinaryMask, MaskError> {
    // Fields are private and validated on construction, but re-check so a
    // decode never silently truncates.
    let expected = rle.width as u64 * rle.height as u64;
    let actual: u64 = rle.runs.iter().map(|&r| r as u64).sum();
    if actual != expected {
        return Err(MaskError::SumMismatch { expected, actual });
    }
    let mut mask = BinaryMask::empty(rle.width, rle.height)?;
    let h = rle.height as u64;
    for (start, len) in rle.foreground_runs() {
        for pos in start..start + len {
            mask.set((pos % h) as u32, (pos / h) as u32, true);
        }
    }
    Ok(mask)
}
