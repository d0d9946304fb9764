//! Model assembly: blocks, cross-convolution, final bloc, full models and
//! checkpoints.

mod blocks;
mod checkpoint;
mod config;
mod cross;
mod deep;
mod final_bloc;

pub use blocks::{ConvBlock, ConvBlockCache, SubBlock, SubBlockCache, SubNet, SubNetCache};
pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{count_parameters, ModelConfig, ModelKind, Shapes, BLOCK_SHRINK, SUBNET_SHRINK};
pub use cross::{cross_product, cross_product_backward, CrossCache, CrossConv};
pub use deep::{deepcharmatch_forward, deepwordmatch_forward, DeepModel, ModelCache};
pub use final_bloc::{FinalBloc, FinalCache};
