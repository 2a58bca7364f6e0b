use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng as _;

use super::split::SplitPlan;
use super::task::{Task, TaskKind};
use crate::data::{GriddedField, PointSet};
use crate::error::{Error, Result};
use crate::field_models::{sample_gp_field, SeKernelParams, StationData};
use crate::rng::Rng;

/// Domain of the 1D GP tasks, before normalisation.
pub const GP_DOMAIN: [f64; 2] = [-2.0, 2.0];
pub const GP_MIN_POINTS: usize = 10;
pub const GP_MAX_POINTS: usize = 60;

/// `clamp(round(r²·n), 1, n − 1)` for `n ≥ 2`.
pub fn context_size(r: f64, n: usize) -> usize {
    let raw = (r * r * n as f64).round() as usize;
    raw.clamp(1, n - 1)
}

/// Random context/target split of one observation set. `ids` labels the
/// points (station indices) and is split alongside them.
fn split_points(points: &PointSet, ids: &[usize], n_context: usize, rng: &mut Rng) -> (PointSet, PointSet, Vec<usize>, Vec<usize>) {
    let n = points.len();
    let mut is_context = vec![false; n];
    for i in sample(rng, n, n_context) {
        is_context[i] = true;
    }
    let (ctx_idx, tgt_idx): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| is_context[i]);
    let label = |idx: &[usize]| if ids.is_empty() { Vec::new() } else { idx.iter().map(|&i| ids[i]).collect() };
    (points.select(&ctx_idx), points.select(&tgt_idx), label(&ctx_idx), label(&tgt_idx))
}

/// Training task at `time_id`: a context fraction `r ~ U(0,1)` sets the
/// context size by the r² law; the remaining reporting stations are targets.
/// Returns `None` (with a warning) when fewer than two stations report.
pub fn make_train_task(
    data: &StationData,
    time_id: u32,
    train_stations: &[usize],
    aux: &Arc<[GriddedField]>,
    rng: &mut Rng,
) -> Option<Task> {
    let (points, present, missing) = data.observations(time_id, train_stations);
    if present.len() < 2 {
        log::warn!("skipping time {time_id}: only {} training stations report", present.len());
        return None;
    }
    let r: f64 = rng.random();
    let n_context = context_size(r, present.len());
    let (context, targets, ctx_ids, tgt_ids) = split_points(&points, &present, n_context, rng);
    let mut task = Task::new(time_id, TaskKind::Train, context, targets).with_aux(aux.clone());
    task.context_stations = ctx_ids;
    task.target_stations = tgt_ids;
    task.missing_stations = missing;
    Some(task)
}

fn fixed_task(
    data: &StationData,
    time_id: u32,
    kind: TaskKind,
    context_stations: &[usize],
    target_stations: &[usize],
    aux: &Arc<[GriddedField]>,
) -> Task {
    let (context, ctx_present, mut missing) = data.observations(time_id, context_stations);
    let (targets, tgt_present, tgt_missing) = data.observations(time_id, target_stations);
    missing.extend(tgt_missing);
    let mut task = Task::new(time_id, kind, context, targets).with_aux(aux.clone());
    task.context_stations = ctx_present;
    task.target_stations = tgt_present;
    task.missing_stations = missing;
    task
}

/// Validation task: all training stations as context, validation stations as targets.
pub fn make_val_task(data: &StationData, time_id: u32, plan: &SplitPlan, aux: &Arc<[GriddedField]>) -> Result<Task> {
    if !plan.val_times.contains(&time_id) {
        return Err(Error::config(format!("time {time_id} is not a validation time")));
    }
    Ok(fixed_task(data, time_id, TaskKind::Val, &plan.train_stations, &plan.val_stations, aux))
}

/// Test task: training and validation stations as context, held-out test stations as targets.
pub fn make_test_task(data: &StationData, time_id: u32, plan: &SplitPlan, aux: &Arc<[GriddedField]>) -> Result<Task> {
    if !plan.test_times.contains(&time_id) {
        return Err(Error::config(format!("time {time_id} is not a test time")));
    }
    let context: Vec<usize> = plan.train_stations.iter().chain(&plan.val_stations).copied().collect();
    Ok(fixed_task(data, time_id, TaskKind::Test, &context, &plan.test_stations, aux))
}

/// Uniform points on [`GP_DOMAIN`]; the count is drawn from
/// `U{GP_MIN_POINTS..=GP_MAX_POINTS}`.
pub fn sample_gp_points(params: &SeKernelParams, rng: &mut Rng) -> Result<PointSet> {
    let n = rng.random_range(GP_MIN_POINTS..=GP_MAX_POINTS);
    let coords: Vec<f64> = (0..n).map(|_| rng.random_range(GP_DOMAIN[0]..GP_DOMAIN[1])).collect();
    Ok(sample_gp_field(params, &coords, 1, rng)?.observed())
}

/// Splits a GP draw into context and targets with `n_context ~ U{1..n−1}`.
pub fn split_gp_points(points: &PointSet, kind: TaskKind, rng: &mut Rng) -> Task {
    let n_context = rng.random_range(1..points.len());
    let (context, targets, _, _) = split_points(points, &[], n_context, rng);
    Task::new(0, kind, context, targets)
}

/// A fresh 1D GP task.
pub fn make_gp_task(params: &SeKernelParams, kind: TaskKind, rng: &mut Rng) -> Result<Task> {
    let points = sample_gp_points(params, rng)?;
    Ok(split_gp_points(&points, kind, rng))
}
