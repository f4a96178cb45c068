//! Signal tensors and everything between a file on disk and batches of
//! `(history, horizon)` windows.

mod io;
mod normalize;
mod synth;
mod window;

use std::ops::Range;

pub use io::{load_signal, read_binary, read_csv, write_binary, write_csv, write_labels, SignalFormat};
pub use normalize::{NormalizationScope, Normalizer};
pub use synth::{synth_traffic, SyntheticData, SYNTH_AMPLITUDE, SYNTH_PERIOD};
pub use window::{make_samples, Dataset, SampleSet, SplitSpec};

use crate::error::{Error, Result};
use crate::similarity::Series;

/// Observations laid out `[step][node][feature]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTensor {
    steps: usize,
    nodes: usize,
    features: usize,
    values: Vec<f32>,
    mask: Option<Vec<bool>>,
}

impl SignalTensor {
    pub fn new(steps: usize, nodes: usize, features: usize, values: Vec<f32>) -> Result<Self> {
        if steps == 0 || nodes == 0 || features == 0 {
            return Err(Error::Usage(format!(
                "signal dimensions must be positive, got {steps}x{nodes}x{features}"
            )));
        }
        if values.len() != steps * nodes * features {
            return Err(Error::Usage(format!(
                "{} values do not fill a {steps}x{nodes}x{features} tensor",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Usage(format!("non-finite value at flat index {pos}")));
        }
        Ok(Self {
            steps,
            nodes,
            features,
            values,
            mask: None,
        })
    }

    /// Attaches an observation mask (`true` = observed) of identical shape.
    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.values.len() {
            return Err(Error::Usage(format!(
                "mask has {} entries, tensor has {}",
                mask.len(),
                self.values.len()
            )));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn get(&self, t: usize, n: usize, k: usize) -> f32 {
        self.values[(t * self.nodes + n) * self.features + k]
    }

    /// Size of one time step, `nodes * features`.
    pub fn step_len(&self) -> usize {
        self.nodes * self.features
    }

    /// Contiguous slice covering steps `range`.
    pub fn steps_slice(&self, range: Range<usize>) -> &[f32] {
        &self.values[range.start * self.step_len()..range.end * self.step_len()]
    }

    pub fn mask_slice(&self, range: Range<usize>) -> Option<&[bool]> {
        let w = self.step_len();
        self.mask.as_deref().map(|m| &m[range.start * w..range.end * w])
    }

    pub(crate) fn map_values(&self, f: impl Fn(usize, f32) -> f32) -> Self {
        let d = self.features;
        Self {
            values: self
                .values
                .iter()
                .enumerate()
                .map(|(i, &v)| f(i % d, v))
                .collect(),
            ..self.clone()
        }
    }

    #[cfg(test)]
    pub(crate) fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    /// One node's series over `range`, as input for DTW.
    pub fn node_series(&self, node: usize, range: Range<usize>) -> Result<Series> {
        if node >= self.nodes || range.end > self.steps || range.is_empty() {
            return Err(Error::Usage(format!(
                "node {node} / steps {range:?} outside a {}x{} signal",
                self.steps, self.nodes
            )));
        }
        let mut values = Vec::with_capacity(range.len() * self.features);
        for t in range {
            for k in 0..self.features {
                values.push(self.get(t, node, k) as f64);
            }
        }
        Series::new(values, self.features)
    }

    /// Per-node series over `range` for every node.
    pub fn all_series(&self, range: Range<usize>) -> Result<Vec<Series>> {
        (0..self.nodes)
            .map(|n| self.node_series(n, range.clone()))
            .collect()
    }
}
