//! Losses, Adam, early stopping and the mini-batch training loop.

mod adam;
mod loss;
mod trainer;

pub use adam::{adam_step, Adam, AdamConfig};
pub use loss::{loss, loss_grad, LossKind};
pub use trainer::{
    epoch_order, evaluate_loss, train, EarlyStopping, EpochRecord, StopReason, TrainConfig,
    TrainFailure, TrainObserver, TrainReport, Verdict,
};
