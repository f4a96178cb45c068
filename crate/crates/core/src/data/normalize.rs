use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::SignalTensor;
use crate::error::{Error, Result};

/// Which steps the z-score statistics are fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationScope {
    #[default]
    Train,
    Global,
}

/// Per-feature z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Normalizer {
    /// Fits mean and population standard deviation over `range` (all nodes).
    /// Zero-variance features get `std = 1`.
    pub fn fit(x: &SignalTensor, range: Range<usize>) -> Result<Self> {
        if range.is_empty() || range.end > x.steps() {
            return Err(Error::Usage(format!(
                "normalizer range {range:?} invalid for {} steps",
                x.steps()
            )));
        }
        let d = x.features();
        let mut sum = vec![0f64; d];
        let mut sq = vec![0f64; d];
        let slice = x.steps_slice(range);
        for (i, &v) in slice.iter().enumerate() {
            sum[i % d] += v as f64;
        }
        let count = (slice.len() / d) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        for (i, &v) in slice.iter().enumerate() {
            let e = v as f64 - mean[i % d];
            sq[i % d] += e * e;
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = (s / count).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd as f32
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self {
            mean: mean.into_iter().map(|m| m as f32).collect(),
            std,
        })
    }

    /// Statistics that leave values untouched.
    pub fn identity(features: usize) -> Self {
        Self {
            mean: vec![0.0; features],
            std: vec![1.0; features],
        }
    }

    pub fn features(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &SignalTensor) -> SignalTensor {
        x.map_values(|k, v| ((v as f64 - self.mean[k] as f64) / self.std[k] as f64) as f32)
    }

    pub fn invert(&self, x: &SignalTensor) -> SignalTensor {
        x.map_values(|k, v| self.denormalize(k, v))
    }

    #[inline]
    pub fn denormalize(&self, feature: usize, v: f32) -> f32 {
        (v as f64 * self.std[feature] as f64 + self.mean[feature] as f64) as f32
    }
}
