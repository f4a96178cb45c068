use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::adam::{AdamConfig, OptimizerState};
use crate::data::{Dataset, Normalizer, SampleSet};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::graph::AdjacencyMatrix;
use crate::model::{prepare_graph, sample_gradient, save_checkpoint, ModelConfig, ModelParams, SparseGraph};

/// Offset mixed into the seed for the epoch shuffle so it does not share a
/// stream with initialization.
const SHUFFLE_STREAM: u64 = 0x5348_5546;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
    /// Directory receiving `best.stfc`, `last.stfc` and `history.csv`.
    pub checkpoint_dir: Option<PathBuf>,
    /// Global gradient-norm clip, off by default.
    pub clip_norm: Option<f64>,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 200,
            seed: 0,
            patience: None,
            checkpoint_dir: None,
            clip_norm: None,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.clip_norm.is_some_and(|c| c.is_nan() || c <= 0.0) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        if self.adam.lr.is_nan() || self.adam.lr <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
    pub val_mape: f64,
    pub val_rmse: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,val_mae,val_mape,val_rmse,seconds")?;
        for r in &self.epochs {
            writeln!(
                w,
                "{},{},{},{},{},{:.3}",
                r.epoch, r.train_loss, r.val_mae, r.val_mape, r.val_rmse, r.seconds
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation MAE.
    pub best: ModelParams<f32>,
    pub last: ModelParams<f32>,
    /// One-based epoch of `best`; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    pub history: TrainHistory,
}

/// Training stopped early; the history up to the fault is kept.
#[derive(Debug, Error)]
#[error("training aborted after {} epochs: {error}", history.len())]
pub struct TrainFailure {
    pub error: Error,
    pub history: TrainHistory,
}

/// Mean loss and mean parameter gradient over `indices`. Samples are
/// processed in parallel and summed in index order, so the result does not
/// depend on the worker count.
pub fn batch_gradients(
    config: &ModelConfig,
    params: &ModelParams<f32>,
    graph: &SparseGraph<f32>,
    samples: &SampleSet,
    indices: &[usize],
    normalizer: &Normalizer,
) -> Result<(f32, ModelParams<f32>)> {
    if indices.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    let per_sample: Vec<(f32, ModelParams<f32>)> = indices
        .par_iter()
        .map(|&i| {
            let mut g = ModelParams::zeros(config);
            let loss = sample_gradient(
                config,
                params,
                graph,
                samples.input(i),
                samples.target(i),
                samples.target_mask(i),
                normalizer,
                &mut g,
            )?;
            Ok((loss, g))
        })
        .collect::<Result<_>>()?;
    let mut iter = per_sample.into_iter();
    let (mut loss, mut grads) = iter.next().expect("batch is nonempty");
    for (l, g) in iter {
        loss += l;
        grads.add_assign(&g);
    }
    let scale = 1.0 / indices.len() as f32;
    loss *= scale;
    grads.scale(scale);
    if !loss.is_finite() {
        let name = grads.first_non_finite().unwrap_or_else(|| "loss".into());
        return Err(Error::NonFinite { name });
    }
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NonFinite { name });
    }
    Ok((loss, grads))
}

fn clip(grads: &mut ModelParams<f32>, max_norm: f64) {
    let norm = grads
        .tensors()
        .iter()
        .flat_map(|t| t.data())
        .map(|&v| (v as f64) * (v as f64))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        grads.scale((max_norm / norm) as f32);
    }
}

/// Trains from Glorot initialization seeded by `train.seed`.
pub fn train(
    model: &ModelConfig,
    train: &TrainConfig,
    data: &Dataset,
    fusion: &AdjacencyMatrix,
) -> Result<TrainOutcome, TrainFailure> {
    train_from(ModelParams::glorot(model, train.seed), model, train, data, fusion)
}

/// Trains starting from `init`.
pub fn train_from(
    init: ModelParams<f32>,
    model: &ModelConfig,
    train: &TrainConfig,
    data: &Dataset,
    fusion: &AdjacencyMatrix,
) -> Result<TrainOutcome, TrainFailure> {
    let mut history = TrainHistory::default();
    match run(init, model, train, data, fusion, &mut history) {
        Ok((best, last, best_epoch)) => Ok(TrainOutcome {
            best,
            last,
            best_epoch,
            history,
        }),
        Err(error) => Err(TrainFailure { error, history }),
    }
}

fn run(
    init: ModelParams<f32>,
    model: &ModelConfig,
    train: &TrainConfig,
    data: &Dataset,
    fusion: &AdjacencyMatrix,
    history: &mut TrainHistory,
) -> Result<(ModelParams<f32>, ModelParams<f32>, Option<usize>)> {
    model.validate()?;
    train.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::Usage(
            "train and validation splits must be nonempty".into(),
        ));
    }
    let graph = prepare_graph::<f32>(model, fusion)?;
    if let Some(dir) = &train.checkpoint_dir {
        fs::create_dir_all(dir)?;
    }
    let mut params = init;
    let mut best = params.clone();
    let mut best_mae = f64::INFINITY;
    let mut best_epoch = None;
    let mut optimizer = OptimizerState::new(train.adam, model);
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed ^ SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 1..=train.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0f64;
        for batch in order.chunks(train.batch_size) {
            let (loss, mut grads) =
                batch_gradients(model, &params, &graph, &data.train, batch, &data.normalizer)?;
            if let Some(c) = train.clip_norm {
                clip(&mut grads, c);
            }
            optimizer.step(&mut params, &grads);
            loss_sum += loss as f64 * batch.len() as f64;
        }
        if let Some(name) = params.first_non_finite() {
            return Err(Error::NonFinite { name });
        }
        let report = evaluate(model, &params, &graph, &data.val, &data.normalizer, 0.0)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            val_mae: report.overall.mae,
            val_mape: report.overall.mape,
            val_rmse: report.overall.rmse,
            seconds: started.elapsed().as_secs_f64(),
        });
        if report.overall.mae < best_mae {
            best_mae = report.overall.mae;
            best = params.clone();
            best_epoch = Some(epoch);
            if let Some(dir) = &train.checkpoint_dir {
                save_checkpoint(dir.join("best.stfc"), model, &best)?;
            }
        }
        if let Some(dir) = &train.checkpoint_dir {
            save_checkpoint(dir.join("last.stfc"), model, &params)?;
            let mut buf = Vec::new();
            history.write_csv(&mut buf)?;
            fs::write(dir.join("history.csv"), buf)?;
        }
        if let (Some(p), Some(b)) = (train.patience, best_epoch) {
            if epoch - b >= p {
                break;
            }
        }
    }
    Ok((best, params, best_epoch))
}
