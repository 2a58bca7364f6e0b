//! The three 1D GP transfer grids.

use std::path::Path;

use rayon::prelude::*;

use super::records::ResultRecord;
use super::spec::{Baseline, ExperimentSpec};
use super::{model_path, record_for, save_model, Job};
use crate::convcnp::{ConvCnp, ModelConfig};
use crate::data::PointSet;
use crate::error::Result;
use crate::field_models::SeKernelParams;
use crate::finetune::{finetune, AdaptationStrategy};
use crate::rng::{derive_seed, derived, label_key, Rng};
use crate::taskgen::{
    sample_gp_points, split_gp_points, train_share, GpDatasetStream, GpTaskStream, Task, TaskKind, GP_DOMAIN,
};
use crate::training::{evaluate, pretrain, GpOracle, Normalizer, Sim2RealModel, TrainConfig, TrainingOutcome};

const NORMALIZER_DRAWS: usize = 256;

pub fn condition_label(p: &SeKernelParams) -> String {
    format!("l={} noise={}", p.lengthscale, p.noise_std)
}

/// `n` fresh GP tasks.
pub fn gp_tasks(params: &SeKernelParams, n: usize, kind: TaskKind, rng: &mut Rng) -> Result<Vec<Task>> {
    (0..n)
        .map(|_| {
            let points = sample_gp_points(params, rng)?;
            Ok(split_gp_points(&points, kind, rng))
        })
        .collect()
}

/// Value statistics of `NORMALIZER_DRAWS` draws; coordinates map the GP domain to [0, 1].
pub fn gp_normalizer(params: &SeKernelParams, rng: &mut Rng) -> Result<Normalizer> {
    let mut values = Vec::new();
    for _ in 0..NORMALIZER_DRAWS {
        values.extend(sample_gp_points(params, rng)?.values);
    }
    Normalizer::fit(vec![GP_DOMAIN[0]], vec![GP_DOMAIN[1]], values)
}

/// Trains a fresh model on an endless stream of `params` tasks.
pub fn gp_pretrain(
    model: &ModelConfig,
    params: &SeKernelParams,
    cfg: &TrainConfig,
    n_val: usize,
    seed: u64,
) -> Result<(Sim2RealModel, TrainingOutcome)> {
    let normalizer = gp_normalizer(params, &mut derived(seed, &[label_key("normalizer")]))?;
    let net = ConvCnp::new(model.clone(), derive_seed(seed, &[label_key("init")]))?;
    let mut m = Sim2RealModel::new(net, normalizer)?;
    let val = gp_tasks(params, n_val, TaskKind::Val, &mut derived(seed, &[label_key("val")]))?;
    let mut stream = GpTaskStream::new(*params, derived(seed, &[label_key("stream")]));
    let cfg = TrainConfig {
        seed,
        ..cfg.clone()
    };
    let outcome = pretrain(&mut m, &mut stream, &val, &cfg)?;
    Ok((m, outcome))
}

/// The infinite-data ceiling: [`gp_pretrain`] directly on the real-world GP.
pub fn infinite_data_baseline(
    real: &SeKernelParams,
    model: &ModelConfig,
    cfg: &TrainConfig,
    n_val: usize,
    seed: u64,
) -> Result<(Sim2RealModel, TrainingOutcome)> {
    gp_pretrain(model, real, cfg, n_val, seed)
}

/// A finite fine-tuning dataset: 80% of the draws feed training (re-split on
/// every visit), the rest become fixed validation tasks.
#[derive(Clone, Debug)]
pub struct GpDataset {
    pub train: Vec<PointSet>,
    pub val: Vec<Task>,
}

impl GpDataset {
    /// Splits existing draws: the first 80% train, the rest validate.
    pub fn from_draws(mut draws: Vec<PointSet>, rng: &mut Rng) -> Self {
        let val_draws = draws.split_off(train_share(draws.len()));
        let val = val_draws.iter().map(|p| split_gp_points(p, TaskKind::Val, rng)).collect();
        GpDataset { train: draws, val }
    }
}

pub fn gp_dataset(params: &SeKernelParams, n_tasks: usize, rng: &mut Rng) -> Result<GpDataset> {
    let draws: Vec<PointSet> = (0..n_tasks).map(|_| sample_gp_points(params, rng)).collect::<Result<_>>()?;
    Ok(GpDataset::from_draws(draws, rng))
}

fn real_only(
    spec: &ExperimentSpec,
    data: &GpDataset,
    seed: u64,
) -> Result<Sim2RealModel> {
    let values = data.train.iter().flat_map(|p| p.values.iter().copied());
    let normalizer = Normalizer::fit(vec![GP_DOMAIN[0]], vec![GP_DOMAIN[1]], values)?;
    let net = ConvCnp::new(spec.model.clone(), derive_seed(seed, &[label_key("init")]))?;
    let mut m = Sim2RealModel::new(net, normalizer)?;
    let mut stream = GpDatasetStream::new(data.train.clone(), derived(seed, &[label_key("stream")]))?;
    let cfg = TrainConfig {
        seed,
        ..spec.real_only.clone()
    };
    pretrain(&mut m, &mut stream, &data.val, &cfg)?;
    Ok(m)
}

pub(crate) fn run(spec: &ExperimentSpec, pretrained: &Sim2RealModel, out: Option<&Path>) -> Result<Vec<ResultRecord>> {
    let seed = spec.master_seed;
    let mut records = Vec::new();
    for (ci, real) in spec.real_params.iter().enumerate() {
        let cond = condition_label(real);
        log::info!("condition {cond}");
        let ci = ci as u64;
        let test = gp_tasks(real, spec.n_test_tasks, TaskKind::Test, &mut derived(seed, &[label_key("test"), ci]))?;
        let oracle = evaluate(&GpOracle { params: *real }, &test)?;
        let base = ResultRecord {
            kind: spec.kind.to_string(),
            condition: cond.clone(),
            strategy: String::new(),
            n_tasks: None,
            n_stations: None,
            n_times: None,
            replicate: 0,
            test_nll: f64::NAN,
            test_mae: f64::NAN,
            oracle_nll: Some(oracle.nll),
            status: String::new(),
        };
        let mut jobs: Vec<Job> = Vec::new();
        for &b in &spec.baselines {
            match b {
                Baseline::SimOnly | Baseline::Oracle | Baseline::InfiniteData => jobs.push(Job::Baseline(b, None, 0)),
                Baseline::RealOnly => {}
            }
        }
        for &n in &spec.n_tasks_grid {
            for r in 0..spec.n_replicates {
                for &s in &spec.strategies {
                    jobs.push(Job::Adapt(s, n, r));
                }
                if spec.baselines.contains(&Baseline::RealOnly) {
                    jobs.push(Job::Baseline(Baseline::RealOnly, Some(n), r));
                }
            }
        }
        let results: Vec<ResultRecord> = jobs
            .par_iter()
            .map(|job| {
                let dataset = |n: usize, r: usize| {
                    gp_dataset(real, n, &mut derived(seed, &[label_key("dataset"), ci, n as u64, r as u64]))
                };
                let outcome: Result<Option<Sim2RealModel>> = match *job {
                    Job::Baseline(Baseline::SimOnly, ..) => Ok(Some(pretrained.clone())),
                    Job::Baseline(Baseline::Oracle, ..) => Ok(None),
                    Job::Baseline(Baseline::InfiniteData, ..) => infinite_data_baseline(
                        real,
                        &spec.model,
                        &spec.infinite_data,
                        spec.n_val_tasks,
                        derive_seed(seed, &[label_key("infinite_data"), ci]),
                    )
                    .map(|(m, _)| Some(m)),
                    Job::Baseline(Baseline::RealOnly, n, r) => {
                        let n = n.expect("real-only runs carry N_tasks");
                        dataset(n, r).and_then(|d| {
                            real_only(spec, &d, derive_seed(seed, &[label_key("real_only"), ci, n as u64, r as u64]))
                        })
                        .map(Some)
                    }
                    Job::Adapt(kind, n, r) => dataset(n, r).and_then(|d| {
                        let stream_seed =
                            derive_seed(seed, &[label_key("finetune"), ci, n as u64, label_key(kind.as_str()), r as u64]);
                        let mut stream = GpDatasetStream::new(d.train, derived(stream_seed, &[]))?;
                        let strategy = AdaptationStrategy {
                            kind,
                            config: TrainConfig {
                                seed: stream_seed,
                                ..spec.finetune.clone()
                            },
                        };
                        finetune(pretrained, &strategy, &mut stream, &d.val).map(|(m, _)| Some(m))
                    }),
                };
                let eval = outcome.and_then(|m| {
                    if let (Some(m), Some(dir)) = (&m, out.filter(|_| spec.save_checkpoints)) {
                        save_model(m, &model_path(dir, &cond, job))?;
                    }
                    match &m {
                        Some(m) => evaluate(m, &test),
                        None => Ok(oracle),
                    }
                });
                record_for(&base, job, eval)
            })
            .collect();
        records.extend(results);
    }
    Ok(records)
}
