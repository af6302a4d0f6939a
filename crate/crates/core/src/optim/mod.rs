//! AdamW, the 1cycle learning-rate schedule and the training loop.

mod adamw;
mod schedule;
mod train;

pub use adamw::{adamw_update, AdamW, AdamWConfig, Parameters};
pub use schedule::{lr_at, OneCycleConfig};
pub use train::{evaluate, train, train_with_observer, EpochRecord, History, TrainConfig};
