//! End-to-end orchestration: run configuration, training, and the
//! generate / train / eval / retrieve / export commands.

mod commands;
mod config;
mod train;

use thiserror::Error;

use crate::discovery::DiscoveryError;
use crate::model::ModelError;
use crate::objectives::ObjectiveError;
use crate::scene::SceneError;

pub use commands::{cmd_eval, cmd_export, cmd_gen, cmd_retrieve, cmd_train, EvalReport, GenSummary, TrainSummary};
pub use config::{Overrides, RunConfig, TWO_TO_FOUR, TWO_TO_THREE};
pub use train::{
    plan_epoch, train, validation_accuracy, validation_subset, write_log, EpochLog, TrainConfig, TrainOutcome,
    LOG_HEADER,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("loss became non-finite in epoch {epoch}")]
    NumericFailure { epoch: usize },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Discovery(#[from] DiscoveryError),
    #[error(transparent)]
    Tensor(#[from] tapegrad::TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
