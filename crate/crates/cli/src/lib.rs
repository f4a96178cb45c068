//! Command-line driver for the `stfgnn` toolkit: graph building, training,
//! evaluation, gradient checking, ablations and synthetic data.
//!
//! Every command prints a single-line JSON summary as its last line of
//! standard output. Exit codes: 0 success, 2 configuration, 3 data,
//! 4 runtime fault.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;

pub use error::{CliError, CliResult};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "STFGNN_WORKERS";
