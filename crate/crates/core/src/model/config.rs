use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optional rescaling of the fusion graph before it enters the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjNormalization {
    #[default]
    None,
    Row,
}

/// Architecture hyperparameters. Shapes of every parameter tensor follow
/// from these plus nothing else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Fusion-graph window size `K`.
    pub window: usize,
    /// Gated graph-multiplication blocks per module (`L`).
    pub blocks: usize,
    /// Hidden channels `C`.
    pub channels: usize,
    pub layers: usize,
    /// Input steps `H`.
    pub history: usize,
    /// Predicted steps `P`.
    pub horizon: usize,
    /// Signal features `d`.
    pub features: usize,
    pub conv_kernel: usize,
    /// Gated-convolution dilation; must equal `window - 1`.
    pub dilation: Option<usize>,
    pub share_window_weights: bool,
    pub out_hidden: usize,
    /// Huber threshold.
    pub delta: f64,
    pub normalize_adj: AdjNormalization,
    /// Whether each layer adds the gated dilated convolution branch.
    pub gated_conv: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            window: 4,
            blocks: 3,
            channels: 64,
            layers: 3,
            history: 12,
            horizon: 12,
            features: 1,
            conv_kernel: 2,
            dilation: None,
            share_window_weights: false,
            out_hidden: 256,
            delta: 1.0,
            normalize_adj: AdjNormalization::None,
            gated_conv: true,
        }
    }
}

impl ModelConfig {
    /// Small network used for gradient checking.
    pub fn tiny() -> Self {
        Self {
            blocks: 2,
            channels: 8,
            layers: 2,
            out_hidden: 32,
            ..Self::default()
        }
    }

    /// Largest layer count the history supports: `floor(H / (K-1)) - 1`.
    pub fn max_layers(&self) -> usize {
        if self.window < 2 {
            return 0;
        }
        (self.history / (self.window - 1)).saturating_sub(1)
    }

    pub fn effective_dilation(&self) -> usize {
        self.dilation.unwrap_or(self.window.saturating_sub(1))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.window < 2 {
            return fail(format!("window must be at least 2, got {}", self.window));
        }
        if self.blocks == 0 || self.channels == 0 || self.layers == 0 {
            return fail("blocks, channels and layers must be positive".into());
        }
        if self.history == 0 || self.horizon == 0 || self.features == 0 || self.out_hidden == 0 {
            return fail("history, horizon, features and out_hidden must be positive".into());
        }
        if self.layers > self.max_layers() {
            return fail(format!(
                "stacking bound violated: {} layers requested but history {} with window {} allows at most floor({}/{}) - 1 = {}",
                self.layers,
                self.history,
                self.window,
                self.history,
                self.window - 1,
                self.max_layers()
            ));
        }
        if self.conv_kernel != 2 {
            return fail(format!("conv_kernel must be 2, got {}", self.conv_kernel));
        }
        if self.effective_dilation() != self.window - 1 {
            return fail(format!(
                "dilation must equal window - 1 = {}, got {}",
                self.window - 1,
                self.effective_dilation()
            ));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return fail(format!("delta must be positive, got {}", self.delta));
        }
        Ok(())
    }

    /// Same configuration with defaults resolved.
    pub fn resolved(&self) -> Self {
        Self {
            dilation: Some(self.effective_dilation()),
            ..self.clone()
        }
    }

    /// Temporal length entering layer `l`; zero past the stacking bound.
    pub fn layer_input_len(&self, l: usize) -> usize {
        self.history.saturating_sub(l * self.window.saturating_sub(1))
    }

    /// Number of window modules in layer `l`; zero past the stacking bound.
    pub fn windows_in_layer(&self, l: usize) -> usize {
        (self.layer_input_len(l) + 1).saturating_sub(self.window)
    }

    /// Temporal length after the last layer.
    pub fn final_len(&self) -> usize {
        self.layer_input_len(self.layers)
    }
}
