//! Discrete speech vector representations for Arabic dialect recognition.
//!
//! The pipeline quantises frame embeddings with k-means, measures how well
//! the codes line up with phone labels, and trains a small transformer with
//! a CTC objective on the codes, the embeddings, or both.

pub mod ctc;
pub mod error;
pub mod eval;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod quantizer;
pub mod scalar;
pub mod synth;
pub mod text;

pub use error::{Error, ErrorKind, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

pub type Codebook32 = quantizer::Codebook<f32>;
pub type Codebook64 = quantizer::Codebook<f64>;
pub type DvrModel32 = model::DvrModel<f32>;
pub type DvrModel64 = model::DvrModel<f64>;
