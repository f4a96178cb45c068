//! Spatial-temporal fusion graph forecasting.
//!
//! The crate turns a multivariate sensor signal into forecasts in four steps:
//! banded DTW distances between node series ([`similarity`]), a sparse
//! temporal graph and the block-structured fusion graph ([`graph`]), a gated
//! graph network over sliding windows ([`model`]) trained with Adam
//! ([`training`]), and MAE/MAPE/RMSE reporting ([`eval`]).

pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod similarity;
pub mod training;

pub use error::{Error, Result};
