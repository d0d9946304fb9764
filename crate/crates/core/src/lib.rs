//! Character- and word-level convolutional click-through-rate models for
//! query-ad pairs, with training, baselines and evaluation.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod harness;
pub mod layers;
pub mod model;
pub mod params;
pub mod tensor;
pub mod text;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor2;
