//! Forecast error metrics on the original signal scale.
//!
//! Elements whose target is unobserved (per the signal mask) are excluded
//! from every metric. MAPE additionally skips targets with `|y| <= epsilon`.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Normalizer, SampleSet};
use crate::error::{Error, Result};
use crate::model::{predict, ModelConfig, ModelParams, SparseGraph};

fn check_lengths(pred: &[f32], target: &[f32], mask: Option<&[bool]>) -> Result<()> {
    if pred.len() != target.len() || mask.is_some_and(|m| m.len() != target.len()) {
        return Err(Error::Usage(format!(
            "metric inputs differ in length: {} predictions, {} targets",
            pred.len(),
            target.len()
        )));
    }
    Ok(())
}

fn observed(mask: Option<&[bool]>, i: usize) -> bool {
    mask.is_none_or(|m| m[i])
}

/// Mean absolute error over observed elements.
pub fn mae(pred: &[f32], target: &[f32], mask: Option<&[bool]>) -> Result<f64> {
    let mut acc = Accumulator::default();
    acc.add(pred, target, mask, 0.0)?;
    acc.finish().map(|m| m.mae)
}

/// Root mean squared error over observed elements.
pub fn rmse(pred: &[f32], target: &[f32], mask: Option<&[bool]>) -> Result<f64> {
    let mut acc = Accumulator::default();
    acc.add(pred, target, mask, 0.0)?;
    acc.finish().map(|m| m.rmse)
}

/// Mean absolute percentage error, in percent, over observed elements with
/// `|target| > epsilon`.
pub fn mape(pred: &[f32], target: &[f32], epsilon: f64, mask: Option<&[bool]>) -> Result<f64> {
    let mut acc = Accumulator::default();
    acc.add(pred, target, mask, epsilon)?;
    if acc.pct_count == 0 {
        return Err(Error::UndefinedMetric(format!(
            "MAPE: no target exceeds {epsilon} in magnitude"
        )));
    }
    Ok(acc.pct_sum / acc.pct_count as f64 * 100.0)
}

#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    abs_sum: f64,
    sq_sum: f64,
    count: usize,
    pct_sum: f64,
    pct_count: usize,
    masked: usize,
}

impl Accumulator {
    fn add(&mut self, pred: &[f32], target: &[f32], mask: Option<&[bool]>, epsilon: f64) -> Result<()> {
        check_lengths(pred, target, mask)?;
        for (i, (&p, &y)) in pred.iter().zip(target).enumerate() {
            if !observed(mask, i) {
                self.masked += 1;
                continue;
            }
            let (p, y) = (p as f64, y as f64);
            let e = (p - y).abs();
            self.abs_sum += e;
            self.sq_sum += e * e;
            self.count += 1;
            if y.abs() > epsilon {
                self.pct_sum += e / y.abs();
                self.pct_count += 1;
            }
        }
        Ok(())
    }

    fn merge(&mut self, o: &Accumulator) {
        self.abs_sum += o.abs_sum;
        self.sq_sum += o.sq_sum;
        self.count += o.count;
        self.pct_sum += o.pct_sum;
        self.pct_count += o.pct_count;
        self.masked += o.masked;
    }

    fn finish(&self) -> Result<Metrics> {
        if self.count == 0 {
            return Err(Error::UndefinedMetric("every element is masked".into()));
        }
        let n = self.count as f64;
        Ok(Metrics {
            mae: self.abs_sum / n,
            rmse: (self.sq_sum / n).sqrt(),
            mape: if self.pct_count == 0 {
                f64::NAN
            } else {
                self.pct_sum / self.pct_count as f64 * 100.0
            },
            count: self.count,
        })
    }
}

/// Metrics of one horizon step or of all steps pooled. `mape` is NaN when
/// no element passes the MAPE mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub mae: f64,
    pub mape: f64,
    pub rmse: f64,
    /// Elements that entered MAE and RMSE.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Entry `p` covers horizon step `p + 1`.
    pub horizons: Vec<Metrics>,
    pub overall: Metrics,
    /// Unobserved target elements left out of every metric.
    pub masked: usize,
    pub samples: usize,
}

impl EvalReport {
    /// `horizon,mae,mape,rmse` rows for steps `1..=P` and an `overall` row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "horizon,mae,mape,rmse")?;
        for (p, m) in self.horizons.iter().enumerate() {
            writeln!(w, "{},{},{},{}", p + 1, m.mae, m.mape, m.rmse)?;
        }
        let m = &self.overall;
        writeln!(w, "overall,{},{},{}", m.mae, m.mape, m.rmse)
    }

    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} samples, {} masked elements", self.samples, self.masked);
        let _ = writeln!(
            s,
            "{:>8} {:>10} {:>10} {:>10}",
            "horizon", "MAE", "MAPE(%)", "RMSE"
        );
        for (p, m) in self.horizons.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:>8} {:>10.4} {:>10.4} {:>10.4}",
                p + 1,
                m.mae,
                m.mape,
                m.rmse
            );
        }
        let m = &self.overall;
        let _ = writeln!(
            s,
            "{:>8} {:>10.4} {:>10.4} {:>10.4}",
            "overall", m.mae, m.mape, m.rmse
        );
        s
    }
}

/// Builds a report from any predictor returning an original-scale
/// `horizon x N x d` forecast for sample `i`. Predictions run in parallel;
/// accumulation follows sample order.
pub fn evaluate_with<F>(samples: &SampleSet, epsilon: f64, predictor: F) -> Result<EvalReport>
where
    F: Fn(usize) -> Result<Vec<f32>> + Sync,
{
    let horizon = samples.horizon();
    let step = samples.nodes() * samples.features();
    let per_sample: Vec<Vec<Accumulator>> = (0..samples.len())
        .into_par_iter()
        .map(|i| {
            let pred = predictor(i)?;
            let target = samples.target(i);
            if pred.len() != target.len() {
                return Err(Error::Usage(format!(
                    "predictor returned {} values, target has {}",
                    pred.len(),
                    target.len()
                )));
            }
            let mask = samples.target_mask(i);
            (0..horizon)
                .map(|p| {
                    let r = p * step..(p + 1) * step;
                    let mut acc = Accumulator::default();
                    acc.add(&pred[r.clone()], &target[r.clone()], mask.map(|m| &m[r]), epsilon)?;
                    Ok(acc)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut by_step = vec![Accumulator::default(); horizon];
    for accs in &per_sample {
        for (total, a) in by_step.iter_mut().zip(accs) {
            total.merge(a);
        }
    }
    let mut pooled = Accumulator::default();
    for a in &by_step {
        pooled.merge(a);
    }
    Ok(EvalReport {
        horizons: by_step.iter().map(Accumulator::finish).collect::<Result<_>>()?,
        overall: pooled.finish()?,
        masked: pooled.masked,
        samples: samples.len(),
    })
}

/// Runs the network over every sample and scores the de-normalized output.
pub fn evaluate(
    config: &ModelConfig,
    params: &ModelParams<f32>,
    graph: &SparseGraph<f32>,
    samples: &SampleSet,
    normalizer: &Normalizer,
    epsilon: f64,
) -> Result<EvalReport> {
    evaluate_with(samples, epsilon, |i| {
        predict(config, params, graph, samples.input(i), normalizer)
    })
}
