use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::record::{word_count, ReferringSample};
use super::shards::ShardSet;
use super::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    /// Bins over the mask-area / image-area ratio in `[0, 1]`.
    pub area_bins: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            area_bins: 20,
            grid_rows: 20,
            grid_cols: 20,
        }
    }
}

/// Corpus statistics. Every field is an integer tally so merging is exact:
/// stats form a commutative monoid with [`DatasetStats::empty`] as identity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub config: StatsConfig,
    pub count: u64,
    pub word_total: u64,
    /// Exact histogram: word count -> number of samples.
    pub word_hist: BTreeMap<u32, u64>,
    pub area_hist: Vec<u64>,
    /// Row-major `grid_rows x grid_cols` heatmap of mask centroids.
    pub centroid_grid: Vec<u64>,
    /// Samples with an empty mask have no centroid and are tallied here.
    pub empty_masks: u64,
}

fn bin(v: f64, bins: usize) -> usize {
    ((v * bins as f64).floor() as usize).min(bins - 1)
}

impl DatasetStats {
    pub fn empty(config: StatsConfig) -> Self {
        assert!(config.area_bins > 0 && config.grid_rows > 0 && config.grid_cols > 0);
        Self {
            config,
            count: 0,
            word_total: 0,
            word_hist: BTreeMap::new(),
            area_hist: vec![0; config.area_bins],
            centroid_grid: vec![0; config.grid_rows * config.grid_cols],
            empty_masks: 0,
        }
    }

    pub fn add(&mut self, sample: &ReferringSample) {
        self.add_parts(&sample.text, &sample.mask);
    }

    pub fn add_parts(&mut self, text: &str, mask: &crate::mask::RleMask) {
        let words = word_count(text);
        self.count += 1;
        self.word_total += words as u64;
        *self.word_hist.entry(words).or_default() += 1;

        let (area, sum_x, sum_y) = mask.coordinate_sums();
        let (w, h) = (mask.width() as f64, mask.height() as f64);
        let ratio = area as f64 / (w * h);
        self.area_hist[bin(ratio, self.config.area_bins)] += 1;
        if area == 0 {
            self.empty_masks += 1;
            return;
        }
        // centroid of pixel centres, normalized to [0, 1)
        let cx = (sum_x as f64 / area as f64 + 0.5) / w;
        let cy = (sum_y as f64 / area as f64 + 0.5) / h;
        let row = bin(cy, self.config.grid_rows);
        let col = bin(cx, self.config.grid_cols);
        self.centroid_grid[row * self.config.grid_cols + col] += 1;
    }

    pub fn merge(mut self, other: &DatasetStats) -> Result<DatasetStats, StoreError> {
        if self.config != other.config {
            return Err(StoreError::BinMismatch);
        }
        self.count += other.count;
        self.word_total += other.word_total;
        for (&k, &v) in &other.word_hist {
            *self.word_hist.entry(k).or_default() += v;
        }
        for (a, b) in self.area_hist.iter_mut().zip(&other.area_hist) {
            *a += b;
        }
        for (a, b) in self.centroid_grid.iter_mut().zip(&other.centroid_grid) {
            *a += b;
        }
        self.empty_masks += other.empty_masks;
        Ok(self)
    }

    pub fn mean_words(&self) -> Option<f64> {
        (self.count > 0).then(|| self.word_total as f64 / self.count as f64)
    }

    /// Median word count; the mean of the two middle values for even counts.
    pub fn median_words(&self) -> Option<f64> {
        if self.count == 0 {
            return None;
        }
        let nth = |k: u64| {
            let mut seen = 0;
            for (&words, &n) in &self.word_hist {
                seen += n;
                if seen > k {
                    return words as f64;
                }
            }
            unreachable!("histogram mass equals count")
        };
        let mid = self.count / 2;
        Some(if self.count % 2 == 1 {
            nth(mid)
        } else {
            (nth(mid - 1) + nth(mid)) / 2.0
        })
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("stats serialize");
        v["mean_words"] = serde_json::json!(self.mean_words());
        v["median_words"] = serde_json::json!(self.median_words());
        v
    }
}

pub fn stats_of<'a>(samples: impl IntoIterator<Item = &'a ReferringSample>, config: StatsConfig) -> DatasetStats {
    let mut s = DatasetStats::empty(config);
    for x in samples {
        s.add(x);
    }
    s
}

/// Stats over a shard set, one task per shard, merged in shard order.
pub fn compute_stats(set: &ShardSet, config: StatsConfig) -> Result<DatasetStats, StoreError> {
    let parts: Vec<DatasetStats> = set
        .entries()
        .par_iter()
        .map(|e| {
            let rows: Vec<ReferringSample> = set.read_shard(e)?;
            Ok(stats_of(&rows, config))
        })
        .collect::<Result<_, StoreError>>()?;
    parts
        .iter()
        .try_fold(DatasetStats::empty(config), |acc, p| acc.merge(p))
}
