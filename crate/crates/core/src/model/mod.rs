//! Transformer encoder recognisers trained with CTC on discrete codes,
//! continuous embeddings, or both.
//!
//! Each encoder layer is pre-norm: `x + attn(ln(x))` then `x + ffn(ln(x))`,
//! with a GELU feedforward of width `4 * d_model`, sinusoidal positions
//! added to the input, and dropout on the input and both residual branches.

mod adam;
mod checkpoint;
mod config;
mod layers;
mod network;
mod params;
mod predict;
mod train;

pub use adam::Adam;
pub use checkpoint::{load_model, model_from_bytes, model_to_bytes, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use config::{ModelConfig, TrainConfig, Variant, FFN_MULT, LAYER_NORM_EPS};
pub use network::{DvrModel, ModelInput};
pub use params::{ParamStore, Tensor};
pub use predict::{predict, Decoder};
pub use train::{evaluate, train, write_history, EpochRecord, Evaluation, TrainOutcome, TrainSample};
