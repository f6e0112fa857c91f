//! Color features: ten descriptive statistics over each RGB histogram.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagecore::{cap_size, split_channels, ChannelMatrix, RasterImage};

pub const STATS_PER_CHANNEL: usize = 10;
pub const COLOR_DIM: usize = 3 * STATS_PER_CHANNEL;

/// Names of the per-channel statistics, in vector order.
pub const STAT_NAMES: [&str; STATS_PER_CHANNEL] =
    ["mean", "median", "mode", "q1", "q3", "p60", "stddev", "iqr", "range", "skewness"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ColorError {
    #[error("sample {0} is outside the 8-bit range")]
    OutOfRange(f64),
    #[error("histogram is empty")]
    EmptyHistogram,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram256 {
    counts: [u64; 256],
    total: u64,
}

impl Histogram256 {
    pub fn from_counts(counts: [u64; 256]) -> Result<Self, ColorError> {
        let total = counts.iter().sum();
        if total == 0 {
            return Err(ColorError::EmptyHistogram);
        }
        Ok(Self { counts, total })
    }

    pub fn counts(&self) -> &[u64; 256] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Per-channel statistics in vector order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub median: f64,
    pub mode: f64,
    pub q1: f64,
    pub q3: f64,
    pub p60: f64,
    pub stddev: f64,
    pub iqr: f64,
    pub range: f64,
    pub skewness: f64,
}

impl ChannelStats {
    pub fn to_array(&self) -> [f64; STATS_PER_CHANNEL] {
        [
            self.mean, self.median, self.mode, self.q1, self.q3, self.p60, self.stddev, self.iqr,
            self.range, self.skewness,
        ]
    }
}

/// 30 values: R statistics, then G, then B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorFeatureVector(pub Vec<f64>);

impl ColorFeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn channel(&self, k: usize) -> &[f64] {
        &self.0[k * STATS_PER_CHANNEL..(k + 1) * STATS_PER_CHANNEL]
    }
}

/// Counts of each rounded intensity. Samples must round into `[0, 255]`.
pub fn channel_histogram(ch: &ChannelMatrix) -> Result<Histogram256, ColorError> {
    let mut counts = [0u64; 256];
    for &v in ch.values() {
        let r = v.round();
        if !(0.0..=255.0).contains(&r) {
            return Err(ColorError::OutOfRange(v));
        }
        counts[r as usize] += 1;
    }
    Histogram256::from_counts(counts)
}

/// Smallest intensity whose cumulative share reaches `percent`/100.
fn percentile(h: &Histogram256, percent: u64) -> f64 {
    let mut cum = 0u64;
    for (v, &c) in h.counts.iter().enumerate() {
        cum += c;
        if cum * 100 >= percent * h.total {
            return v as f64;
        }
    }
    255.0
}

pub fn descriptive_stats(h: &Histogram256) -> Result<ChannelStats, ColorError> {
    if h.total == 0 {
        return Err(ColorError::EmptyHistogram);
    }
    let n = h.total as f64;
    let occupied = || h.counts.iter().enumerate().filter(|(_, &c)| c > 0);

    let mean = occupied().map(|(v, &c)| v as f64 * c as f64).sum::<f64>() / n;
    let (mut m2, mut m3) = (0.0, 0.0);
    for (v, &c) in occupied() {
        let d = v as f64 - mean;
        m2 += c as f64 * d * d;
        m3 += c as f64 * d * d * d;
    }
    m2 /= n;
    m3 /= n;

    // First maximum wins, so ties go to the smallest intensity.
    let mode = occupied().fold((0usize, 0u64), |best, (v, &c)| if c > best.1 { (v, c) } else { best }).0;
    let lo = occupied().next().map_or(0, |(v, _)| v);
    let hi = occupied().last().map_or(0, |(v, _)| v);

    let q1 = percentile(h, 25);
    let q3 = percentile(h, 75);
    Ok(ChannelStats {
        mean,
        median: percentile(h, 50),
        mode: mode as f64,
        q1,
        q3,
        p60: percentile(h, 60),
        stddev: m2.sqrt(),
        iqr: q3 - q1,
        range: (hi - lo) as f64,
        skewness: if m2 == 0.0 { 0.0 } else { m3 / m2.powf(1.5) },
    })
}

/// Color feature vector of the size-capped image (no padding).
pub fn color_vector(img: &RasterImage) -> Result<ColorFeatureVector, ColorError> {
    let img = cap_size(img);
    let (r, g, b) = split_channels(&img);
    let mut values = Vec::with_capacity(COLOR_DIM);
    for ch in [&r, &g, &b] {
        values.extend(descriptive_stats(&channel_histogram(ch)?)?.to_array());
    }
    Ok(ColorFeatureVector(values))
}
