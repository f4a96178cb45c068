use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{NormalizationScope, Normalizer, SignalTensor};
use crate::error::{Error, Result};

/// Chronological train/validation/test ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "split ratios must be nonnegative and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }

    /// Step ranges for `total` steps, in order train, val, test.
    pub fn ranges(&self, total: usize) -> Result<[Range<usize>; 3]> {
        self.validate()?;
        let train_end = (total as f64 * self.train).round() as usize;
        let val_end = ((total as f64 * (self.train + self.val)).round() as usize).clamp(train_end, total);
        Ok([0..train_end, train_end..val_end, val_end..total])
    }
}

/// Sliding windows of `history` input steps followed by `horizon` target
/// steps, all inside one contiguous range of the timeline.
///
/// Inputs are read from the normalized tensor, targets from the raw one.
#[derive(Debug, Clone)]
pub struct SampleSet {
    inputs: Arc<SignalTensor>,
    targets: Arc<SignalTensor>,
    range: Range<usize>,
    starts: Vec<usize>,
    history: usize,
    horizon: usize,
}

impl SampleSet {
    /// Every stride-1 window inside `range`.
    pub fn from_range(
        inputs: Arc<SignalTensor>,
        targets: Arc<SignalTensor>,
        range: Range<usize>,
        history: usize,
        horizon: usize,
    ) -> Result<Self> {
        if history == 0 || horizon == 0 {
            return Err(Error::Usage("history and horizon must be positive".into()));
        }
        if inputs.steps() != targets.steps()
            || inputs.nodes() != targets.nodes()
            || inputs.features() != targets.features()
        {
            return Err(Error::Usage("input and target tensors differ in shape".into()));
        }
        if range.end > inputs.steps() {
            return Err(Error::Usage(format!(
                "range {range:?} exceeds {} steps",
                inputs.steps()
            )));
        }
        let span = history + horizon;
        if range.len() < span {
            return Err(Error::Usage(format!(
                "range {range:?} has {} steps, need at least history + horizon = {span}",
                range.len()
            )));
        }
        let starts = (range.start..=range.end - span).collect();
        Ok(Self {
            inputs,
            targets,
            range,
            starts,
            history,
            horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn history(&self) -> usize {
        self.history
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn nodes(&self) -> usize {
        self.inputs.nodes()
    }

    pub fn features(&self) -> usize {
        self.inputs.features()
    }

    pub fn range(&self) -> Range<usize> {
        self.range.clone()
    }

    /// First step of sample `i`'s input window.
    pub fn start(&self, i: usize) -> usize {
        self.starts[i]
    }

    /// Normalized `history x nodes x features` input window.
    pub fn input(&self, i: usize) -> &[f32] {
        let s = self.starts[i];
        self.inputs.steps_slice(s..s + self.history)
    }

    /// Original-scale `horizon x nodes x features` target window.
    pub fn target(&self, i: usize) -> &[f32] {
        let s = self.starts[i] + self.history;
        self.targets.steps_slice(s..s + self.horizon)
    }

    pub fn target_mask(&self, i: usize) -> Option<&[bool]> {
        let s = self.starts[i] + self.history;
        self.targets.mask_slice(s..s + self.horizon)
    }

    /// Same windows in a different order.
    pub fn reordered(&self, order: &[usize]) -> Self {
        Self {
            starts: order.iter().map(|&i| self.starts[i]).collect(),
            ..self.clone()
        }
    }

    /// Keeps the first `count` windows.
    pub fn truncated(&self, count: usize) -> Self {
        Self {
            starts: self.starts[..count.min(self.starts.len())].to_vec(),
            ..self.clone()
        }
    }
}

/// Splits chronologically and windows each part independently.
pub fn make_samples(
    raw: Arc<SignalTensor>,
    normalized: Arc<SignalTensor>,
    history: usize,
    horizon: usize,
    split: &SplitSpec,
) -> Result<[SampleSet; 3]> {
    let [train, val, test] = split.ranges(raw.steps())?;
    Ok([
        SampleSet::from_range(normalized.clone(), raw.clone(), train, history, horizon)?,
        SampleSet::from_range(normalized.clone(), raw.clone(), val, history, horizon)?,
        SampleSet::from_range(normalized, raw, test, history, horizon)?,
    ])
}

/// Raw signal, fitted normalizer and the three windowed splits.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub raw: Arc<SignalTensor>,
    pub normalized: Arc<SignalTensor>,
    pub normalizer: Normalizer,
    pub train: SampleSet,
    pub val: SampleSet,
    pub test: SampleSet,
}

impl Dataset {
    pub fn prepare(
        raw: SignalTensor,
        history: usize,
        horizon: usize,
        split: &SplitSpec,
        scope: NormalizationScope,
    ) -> Result<Self> {
        let [train_range, _, _] = split.ranges(raw.steps())?;
        let fit_range = match scope {
            NormalizationScope::Train => train_range,
            NormalizationScope::Global => 0..raw.steps(),
        };
        let normalizer = Normalizer::fit(&raw, fit_range)?;
        let raw = Arc::new(raw);
        let normalized = Arc::new(normalizer.apply(&raw));
        let [train, val, test] = make_samples(raw.clone(), normalized.clone(), history, horizon, split)?;
        Ok(Self {
            raw,
            normalized,
            normalizer,
            train,
            val,
            test,
        })
    }

    pub fn train_range(&self) -> Range<usize> {
        self.train.range()
    }
}
