//! The forecasting network: configuration, parameters, forward and backward
//! passes, loss and checkpoints.

mod checkpoint;
mod config;
mod loss;
mod network;
mod ops;
mod params;
mod sparse;
mod tensor;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use config::{AdjNormalization, ModelConfig};
pub use loss::{huber, huber_grad, huber_loss};
pub use network::{model_forward, predict, prepare_graph, sample_gradient};
pub use ops::{gated_conv, glu_block, input_head, layer_forward, stfgn_module};
pub use params::{ConvParams, GluParams, LayerParams, ModelParams};
pub use sparse::SparseGraph;
pub use tensor::{sigmoid, Scalar, Tensor};

pub(crate) use network::kink_margins;
