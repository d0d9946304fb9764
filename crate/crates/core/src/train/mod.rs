//! Loss, optimizer and the mini-batch training loop.

mod adam;
mod encoder;
mod loss;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use encoder::Encoder;
pub use loss::{cross_entropy_loss, logit_gradient, PROB_CLAMP};
pub use trainer::{
    predict_all, predict_batch, train, ClickModel, EncodedRecords, Examples, HistoryEntry, TrainConfig, TrainHistory,
};
