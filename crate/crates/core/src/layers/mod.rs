//! Differentiable layer primitives with explicit forward caches.
//!
//! Every `forward` stores what its `backward` needs in a caller-owned cache;
//! `backward` consumes that cache, so a second backward without a fresh
//! forward fails with [`Error::MissingCache`](crate::Error::MissingCache).
//! Parameter gradients accumulate until `zero_grads` is called.

mod activation;
mod batchnorm;
pub(crate) mod conv;
mod dense;
pub(crate) mod gemm;
mod init;
mod pool;

pub use activation::{relu_backward, relu_forward, sigmoid, Activation, ReluCache};
pub use batchnorm::{BatchNorm, BatchNormCache, BN_EPSILON, BN_MOMENTUM};
pub use conv::{ConvCache, TemporalConv, FILTER_WIDTH};
pub use dense::{Dense, DenseCache};
pub use init::{he_init, SeededRng};
pub use pool::{MaxPool, PoolCache};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Infer,
}
