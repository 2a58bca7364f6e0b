//! Normalisation, Adam, the annealing/early-stopping loop and evaluation.

mod config;
mod model;
mod normalizer;
mod optimizer;
mod run;

pub use config::{TrainConfig, IMPROVEMENT_TOL};
pub use model::{evaluate, Evaluation, GpOracle, Predictor, Sim2RealModel};
pub use normalizer::Normalizer;
pub use optimizer::{adam_step, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use run::{
    format_training_log, run_training, write_training_log, LogRecord, StopReason, TrainingOutcome,
    TRAINING_LOG_HEADER,
};

use crate::convcnp::ParamGroup;

/// Pre-training updates the backbone only; FiLM stays at identity.
pub fn pretrain(
    model: &mut Sim2RealModel,
    stream: &mut dyn crate::taskgen::TaskStream,
    val_tasks: &[crate::taskgen::Task],
    cfg: &TrainConfig,
) -> crate::Result<TrainingOutcome> {
    let mask = model.net.params().mask(&[ParamGroup::Backbone]);
    run_training(model, stream, val_tasks, cfg, &mask)
}
