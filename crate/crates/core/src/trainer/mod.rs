//! Two-stage optimization, checkpoints, full-video inference and
//! accounting.

mod accounting;
mod checkpoint;
mod config;
mod inference;
mod train;

pub use accounting::{count_config_params, count_flops, count_params, window_flops};
pub use checkpoint::{Checkpoint, MAGIC, VERSION};
pub use config::{DataSource, TrainConfig};
pub use inference::derain_video;
pub use train::{
    evaluate_loss, initial_checkpoint, train, train_stage1, train_stage2, EvaluatedLoss, LossLog, LossRow,
    PlateauSchedule, TrainingData,
};
