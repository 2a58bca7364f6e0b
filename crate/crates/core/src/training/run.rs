use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use super::config::{TrainConfig, IMPROVEMENT_TOL};
use super::model::{evaluate, Sim2RealModel};
use super::optimizer::{adam_step, OptimizerState};
use crate::error::{Error, Result};
use crate::kv::fmt_f64;
use crate::taskgen::{Task, TaskStream};

/// One row of the training log. Epoch 0 scores the starting model.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    pub epoch: usize,
    pub train_nll: Option<f64>,
    pub val_nll: f64,
    pub learning_rate: f64,
    pub seconds: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingOutcome {
    pub log: Vec<LogRecord>,
    pub best_epoch: usize,
    pub best_val_nll: f64,
    pub stop: StopReason,
}

/// Trains the parameters flagged in `trainable`, leaving `model` at the
/// parameters with the lowest validation NLL (raw units).
pub fn run_training(
    model: &mut Sim2RealModel,
    stream: &mut dyn TaskStream,
    val_tasks: &[Task],
    cfg: &TrainConfig,
    trainable: &[bool],
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    if val_tasks.is_empty() {
        return Err(Error::config("training needs a non-empty validation set"));
    }
    let started = Instant::now();
    let elapsed = || cfg.record_timing.then(|| started.elapsed().as_secs_f64());
    let nll_offset = model.normalizer.value_std.ln();

    let val0 = evaluate(model, val_tasks)?.nll;
    if !val0.is_finite() {
        return Err(Error::Diverged { epoch: 0, val_nll: val0 });
    }
    let mut log = vec![LogRecord {
        epoch: 0,
        train_nll: None,
        val_nll: val0,
        learning_rate: cfg.learning_rate,
        seconds: elapsed(),
    }];
    let mut best = (0, val0, model.net.params().values().to_vec());
    let mut state = OptimizerState::new(model.net.params().len(), cfg.learning_rate);
    let (mut since_best, mut since_anneal) = (0, 0);
    let mut stop = StopReason::MaxEpochs;

    for epoch in 1..=cfg.max_epochs {
        let lr = state.learning_rate;
        let mut train_sum = 0.0;
        for _ in 0..cfg.batches_per_epoch {
            let batch: Vec<Task> = stream
                .next_batch(cfg.batch_size)?
                .iter()
                .map(|t| model.normalizer.task(t))
                .collect::<Result<_>>()?;
            let (loss, grad) = model.net.param_gradients(&batch)?;
            adam_step(model.net.params_mut().values_mut(), &grad, &mut state, trainable)?;
            train_sum += loss;
        }
        let val = evaluate(model, val_tasks)?.nll;
        if !val.is_finite() {
            log::error!("validation NLL became {val} at epoch {epoch}");
            return Err(Error::Diverged { epoch, val_nll: val });
        }
        log.push(LogRecord {
            epoch,
            train_nll: Some(train_sum / cfg.batches_per_epoch as f64 + nll_offset),
            val_nll: val,
            learning_rate: lr,
            seconds: elapsed(),
        });
        log::debug!("epoch {epoch}: val {val:.5}, lr {lr:e}");
        if val < best.1 - IMPROVEMENT_TOL {
            best = (epoch, val, model.net.params().values().to_vec());
            since_best = 0;
            since_anneal = 0;
        } else {
            since_best += 1;
            since_anneal += 1;
            if since_best >= cfg.stop_patience_epochs {
                stop = StopReason::Patience;
                break;
            }
            if since_anneal >= cfg.anneal_patience_epochs {
                state.learning_rate /= cfg.anneal_factor;
                since_anneal = 0;
            }
        }
    }
    let (best_epoch, best_val_nll, values) = best;
    model.net.params_mut().set_values(values)?;
    Ok(TrainingOutcome {
        log,
        best_epoch,
        best_val_nll,
        stop,
    })
}

pub const TRAINING_LOG_HEADER: &str = "epoch,train_nll,val_nll,lr,seconds";

pub fn format_training_log(log: &[LogRecord]) -> String {
    let mut out = String::from(TRAINING_LOG_HEADER);
    out.push('\n');
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    for r in log {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.epoch,
            opt(r.train_nll),
            fmt_f64(r.val_nll),
            fmt_f64(r.learning_rate),
            opt(r.seconds)
        );
    }
    out
}

pub fn write_training_log(path: &Path, log: &[LogRecord]) -> Result<()> {
    std::fs::write(path, format_training_log(log))?;
    Ok(())
}
