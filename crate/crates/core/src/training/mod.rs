//! Optimization: per-batch gradients, Adam, the epoch loop with validation
//! selection, and the finite-difference gradient checker.

mod adam;
mod gradcheck;
mod train;

pub use adam::{AdamConfig, OptimizerState};
pub use gradcheck::{gradient_check, gradient_check_with, GradCheckReport, GRADCHECK_NODES};
pub use train::{
    batch_gradients, train, train_from, EpochRecord, TrainConfig, TrainFailure, TrainHistory, TrainOutcome,
};
