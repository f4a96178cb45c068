//! Run configuration: one JSON document with data, graph, model, train, eval
//! and output sections. Omitted keys take their defaults; unknown keys are
//! rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stfgnn::data::{NormalizationScope, SignalFormat, SplitSpec};
use stfgnn::graph::BlockKind;
use stfgnn::model::{AdjNormalization, ModelConfig};
use stfgnn::training::TrainConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatName {
    Binary,
    Csv,
}

impl From<FormatName> for SignalFormat {
    fn from(f: FormatName) -> Self {
        match f {
            FormatName::Binary => SignalFormat::Binary,
            FormatName::Csv => SignalFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub signal: Option<PathBuf>,
    /// Inferred from the file extension when absent.
    pub format: Option<FormatName>,
    /// Features per node; must agree with `model.features`.
    pub features: Option<usize>,
    /// Must agree with `model.history`.
    pub history: Option<usize>,
    /// Must agree with `model.horizon`.
    pub horizon: Option<usize>,
    pub split: SplitSpec,
    pub normalization: NormalizationScope,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            signal: None,
            format: None,
            features: None,
            history: None,
            horizon: None,
            split: SplitSpec::default(),
            normalization: NormalizationScope::Train,
        }
    }
}

/// Graph content of the fusion layout: all graphs, spatial blocks replaced
/// by temporal ones, or connectivity links only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionVariant {
    #[default]
    Full,
    TemporalOnly,
    ConnectivityOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    /// Edge list `from,to[,cost]`; no spatial edges when absent.
    pub spatial: Option<PathBuf>,
    pub spatial_directed: bool,
    pub binarize: bool,
    /// Sakoe-Chiba half-width for the temporal graph.
    pub band_width: usize,
    /// Target nonzero ratio of the temporal graph.
    pub alpha: f64,
    /// Must agree with `model.window`.
    pub window: Option<usize>,
    /// Row-major `K x K` block kinds replacing the default layout.
    pub layout: Option<Vec<BlockKind>>,
    /// Which graphs fill the layout.
    pub fusion: FusionVariant,
    pub self_loops: bool,
    /// Must agree with `model.normalize_adj`.
    pub normalize_adj: Option<AdjNormalization>,
}

impl Default for GraphSection {
    fn default() -> Self {
        Self {
            spatial: None,
            spatial_directed: false,
            binarize: true,
            band_width: 12,
            alpha: 0.01,
            window: None,
            layout: None,
            fusion: FusionVariant::Full,
            self_loops: true,
            normalize_adj: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// MAPE skips targets with `|y| <= epsilon_mask`.
    pub epsilon_mask: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { epsilon_mask: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("runs/default"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub graph: GraphSection,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub output: OutputSection,
}

fn agree<T: PartialEq + std::fmt::Debug>(name: &str, section: Option<T>, model: T) -> CliResult<()> {
    match section {
        Some(v) if v != model => Err(CliError::Config(format!(
            "{name} is {v:?} but the model section says {model:?}"
        ))),
        _ => Ok(()),
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        agree("data.features", self.data.features, self.model.features)?;
        agree("data.history", self.data.history, self.model.history)?;
        agree("data.horizon", self.data.horizon, self.model.horizon)?;
        agree("graph.window", self.graph.window, self.model.window)?;
        agree(
            "graph.normalize_adj",
            self.graph.normalize_adj,
            self.model.normalize_adj,
        )?;
        self.data.split.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if !(self.graph.alpha > 0.0 && self.graph.alpha <= 1.0) {
            return Err(CliError::Config(format!(
                "graph.alpha must be in (0, 1], got {}",
                self.graph.alpha
            )));
        }
        if let Some(layout) = &self.graph.layout {
            let k = self.model.window;
            if layout.len() != k * k {
                return Err(CliError::Config(format!(
                    "graph.layout has {} entries, window {k} needs {}",
                    layout.len(),
                    k * k
                )));
            }
        }
        if self.eval.epsilon_mask.is_nan() || self.eval.epsilon_mask < 0.0 {
            return Err(CliError::Config("eval.epsilon_mask must be nonnegative".into()));
        }
        Ok(())
    }

    /// Same configuration with every default spelled out. Resolving twice
    /// changes nothing.
    pub fn resolved(&self) -> Self {
        let mut r = self.clone();
        r.model = r.model.resolved();
        r.data.features = Some(r.model.features);
        r.data.history = Some(r.model.history);
        r.data.horizon = Some(r.model.horizon);
        r.graph.window = Some(r.model.window);
        r.graph.normalize_adj = Some(r.model.normalize_adj);
        if r.data.format.is_none() {
            r.data.format = r
                .data
                .signal
                .as_deref()
                .map(|p| match SignalFormat::from_path(p) {
                    SignalFormat::Binary => FormatName::Binary,
                    SignalFormat::Csv => FormatName::Csv,
                });
        }
        if r.train.checkpoint_dir.is_none() {
            r.train.checkpoint_dir = Some(r.output.directory.clone());
        }
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }
}
