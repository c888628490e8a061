use serde::{Deserialize, Serialize};

use super::{check_dims, dilate, erode, BinaryMask, MaskError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrimapLabel {
    Background,
    Unknown,
    Foreground,
}

impl TrimapLabel {
    fn code(self) -> u8 {
        match self {
            TrimapLabel::Background => 0,
            TrimapLabel::Unknown => 1,
            TrimapLabel::Foreground => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(TrimapLabel::Background),
            1 => Some(TrimapLabel::Unknown),
            2 => Some(TrimapLabel::Foreground),
            _ => None,
        }
    }
}

/// Per-pixel matting hint, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trimap {
    width: u32,
    height: u32,
    labels: Vec<TrimapLabel>,
}

/// Column-major run-length form of a multi-valued grid:
/// `{"size":[h,w],"counts":[...],"values":[...]}` with one value per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueRuns<T> {
    pub size: [u32; 2],
    pub counts: Vec<u32>,
    pub values: Vec<T>,
}

impl<T: Copy + PartialEq> ValueRuns<T> {
    fn encode(width: u32, height: u32, at: impl Fn(u32, u32) -> T) -> Self {
        let mut counts = Vec::new();
        let mut values: Vec<T> = Vec::new();
        for col in 0..width {
            for row in 0..height {
                let v = at(row, col);
                match values.last() {
                    Some(last) if *last == v => *counts.last_mut().unwrap() += 1,
                    _ => {
                        values.push(v);
                        counts.push(1);
                    }
                }
            }
        }
        Self {
            size: [height, width],
            counts,
            values,
        }
    }

    /// Expand to a row-major buffer.
    fn expand(&self) -> Result<(u32, u32, Vec<T>), MaskError> {
        let [height, width] = self.size;
        check_dims(width, height)?;
        if self.counts.len() != self.values.len() {
            return Err(MaskError::LengthMismatch {
                expected: self.counts.len(),
                actual: self.values.len(),
            });
        }
        if let Some(index) = self.counts.iter().position(|&c| c == 0) {
            return Err(MaskError::ZeroRun { index });
        }
        let expected = width as u64 * height as u64;
        let actual: u64 = self.counts.iter().map(|&c| c as u64).sum();
        if actual != expected || self.values.is_empty() {
            return Err(MaskError::SumMismatch { expected, actual });
        }
        let mut out = vec![self.values[0]; expected as usize];
        let (w, h) = (width as u64, height as u64);
        let mut pos = 0u64;
        for (&count, &value) in self.counts.iter().zip(&self.values) {
            for p in pos..pos + count as u64 {
                let (row, col) = (p % h, p / h);
                out[(row * w + col) as usize] = value;
            }
            pos += count as u64;
        }
        Ok((width, height, out))
    }
}

impl Trimap {
    pub fn from_labels(width: u32, height: u32, labels: Vec<TrimapLabel>) -> Result<Self, MaskError> {
        check_dims(width, height)?;
        let expected = width as usize * height as usize;
        if labels.len() != expected {
            return Err(MaskError::LengthMismatch {
                expected,
                actual: labels.len(),
            });
        }
        Ok(Self { width, height, labels })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn labels(&self) -> &[TrimapLabel] {
        &self.labels
    }

    pub fn get(&self, row: u32, col: u32) -> TrimapLabel {
        self.labels[row as usize * self.width as usize + col as usize]
    }

    pub fn region(&self, label: TrimapLabel) -> BinaryMask {
        let bits = self.labels.iter().map(|&l| l == label).collect();
        BinaryMask::from_bits(self.width, self.height, bits).expect("trimap dims are valid")
    }

    pub fn count(&self, label: TrimapLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Wire form with labels coded 0 = background, 1 = unknown, 2 = foreground.
    pub fn to_runs(&self) -> ValueRuns<u8> {
        ValueRuns::encode(self.width, self.height, |r, c| self.get(r, c).code())
    }

    pub fn from_runs(runs: &ValueRuns<u8>) -> Result<Self, MaskError> {
        let (w, h, codes) = runs.expand()?;
        let labels = codes
            .into_iter()
            .map(|c| TrimapLabel::from_code(c).ok_or(MaskError::InvalidLabel { code: c }))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_labels(w, h, labels)
    }
}

/// Foreground opacity per pixel, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaMatte {
    width: u32,
    height: u32,
    values: Vec<f32>,
}

impl AlphaMatte {
    pub fn new(width: u32, height: u32, values: Vec<f32>) -> Result<Self, MaskError> {
        check_dims(width, height)?;
        let expected = width as usize * height as usize;
        if values.len() != expected {
            return Err(MaskError::LengthMismatch {
                expected,
                actual: values.len(),
            });
        }
        Ok(Self { width, height, values })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, row: u32, col: u32) -> f32 {
        self.values[row as usize * self.width as usize + col as usize]
    }

    pub fn to_runs(&self) -> ValueRuns<f32> {
        ValueRuns::encode(self.width, self.height, |r, c| self.get(r, c))
    }

    pub fn from_runs(runs: &ValueRuns<f32>) -> Result<Self, MaskError> {
        let (w, h, values) = runs.expand()?;
        Self::new(w, h, values)
    }
}

/// Morphology band for an image: 10 px at 1024 px on the long side, scaled
/// proportionally and never below 1.
pub fn default_band(width: u32, height: u32) -> u32 {
    let long = width.max(height) as f64;
    ((10.0 * long / 1024.0).round() as u32).max(1)
}

/// Foreground is the mask eroded by `band`, background the complement of the
/// mask dilated by `band`, unknown everything in between.
pub fn trimap_from_mask(mask: &BinaryMask, band: u32) -> Result<Trimap, MaskError> {
    let inner = erode(mask, band)?;
    let outer = dilate(mask, band)?;
    let labels = inner
        .bits()
        .iter()
        .zip(outer.bits())
        .map(|(&fg, &reach)| match (fg, reach) {
            (true, _) => TrimapLabel::Foreground,
            (false, true) => TrimapLabel::Unknown,
            (false, false) => TrimapLabel::Background,
        })
        .collect();
    Trimap::from_labels(mask.width(), mask.height(), labels)
}
