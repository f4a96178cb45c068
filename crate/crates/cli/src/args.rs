use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;
use stfgnn::data::SignalFormat;

use crate::commands::{self, FusionArgs, SynthArgs, TemporalArgs};
use crate::config::FusionVariant;
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "stfgnn", version, about = "Spatial-temporal fusion graph forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Binary,
    Csv,
}

impl From<FormatArg> for SignalFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Binary => SignalFormat::Binary,
            FormatArg::Csv => SignalFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FusionArg {
    Full,
    TemporalOnly,
    ConnectivityOnly,
}

impl From<FusionArg> for FusionVariant {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::Full => FusionVariant::Full,
            FusionArg::TemporalOnly => FusionVariant::TemporalOnly,
            FusionArg::ConnectivityOnly => FusionVariant::ConnectivityOnly,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// DTW temporal graph of every node pair over the whole signal.
    BuildTemporalGraph {
        #[arg(long)]
        data: PathBuf,
        /// Defaults to the file extension (`.csv` or binary).
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        #[arg(long, default_value_t = 1)]
        features: usize,
        #[arg(long, default_value_t = 12)]
        band: usize,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fusion graph from spatial and temporal edge lists.
    BuildFusionGraph {
        #[arg(long)]
        spatial: PathBuf,
        #[arg(long)]
        temporal: PathBuf,
        #[arg(long)]
        nodes: usize,
        #[arg(long = "K", alias = "window", default_value_t = 4)]
        window: usize,
        #[arg(long, value_enum, default_value = "full")]
        fusion: FusionArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train, checkpoint and evaluate on the test split.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint on the test split.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        /// Uses the model section; the tiny model when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Synthetic clustered traffic with labels and a spatial graph.
    Synth {
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        clusters: usize,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "binary")]
        format: FormatArg,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train several graph/convolution variants and tabulate test metrics.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated names such as `ST4_sp1_conv,T4_sp5_noconv`.
        #[arg(long, value_delimiter = ',', required = true)]
        variants: Vec<String>,
    },
}

pub fn run(command: Command) -> CliResult<Value> {
    match command {
        Command::BuildTemporalGraph {
            data,
            format,
            features,
            band,
            alpha,
            out,
        } => commands::build_temporal_graph(&TemporalArgs {
            data,
            format: format.map(Into::into),
            features,
            band,
            alpha,
            out,
        }),
        Command::BuildFusionGraph {
            spatial,
            temporal,
            nodes,
            window,
            fusion,
            out,
        } => commands::build_fusion_graph(&FusionArgs {
            spatial,
            temporal,
            nodes,
            window,
            fusion: fusion.into(),
            out,
        }),
        Command::Train { config } => commands::train_cmd(&config),
        Command::Evaluate { config, checkpoint } => commands::evaluate_cmd(&config, &checkpoint),
        Command::Gradcheck { config, seed } => commands::gradcheck_cmd(config.as_deref(), seed),
        Command::Synth {
            nodes,
            clusters,
            steps,
            sigma,
            seed,
            format,
            out,
        } => commands::synth_cmd(&SynthArgs {
            nodes,
            clusters,
            steps,
            sigma,
            seed,
            format: format.into(),
            out,
        }),
        Command::Ablate { config, variants } => commands::ablate_cmd(&config, &variants),
    }
}
