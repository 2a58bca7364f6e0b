//! The synthetic station world: gridded simulator pre-training, sparse
//! station fine-tuning.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use super::records::ResultRecord;
use super::spec::{Baseline, ExperimentSpec};
use super::{model_path, record_for, save_model, Job};
use crate::convcnp::{ConvCnp, ModelConfig};
use crate::data::GriddedField;
use crate::error::{Error, Result};
use crate::field_models::{generate_station_world, StationData, StationWorld, StationWorldConfig};
use crate::finetune::{finetune, AdaptationStrategy};
use crate::rng::{derive_seed, derived, label_key, Rng};
use crate::taskgen::{
    make_grid_task, make_test_task, make_val_task, split_times, train_share, CycleLayout, GridTaskStream, PlanRequest,
    SplitPlan, StationTaskStream, Task, TaskKind, TimeSplit,
};
use crate::training::{evaluate, pretrain, Normalizer, Sim2RealModel, TrainConfig, TrainingOutcome};

pub fn condition_label(n_stations: usize, n_times: usize) -> String {
    format!("stations={n_stations} times={n_times}")
}

/// Shortest calendar whose train and val periods hold the 80/20 split of `n_times`.
pub fn required_calendar(n_times: usize, slots_per_day: usize) -> usize {
    let layout = CycleLayout::new(slots_per_day);
    let n_train = train_share(n_times);
    let cycles = n_train.div_ceil(layout.train).max((n_times - n_train).div_ceil(layout.val)).max(1);
    cycles * layout.len()
}

/// Station data, gridded inputs and calendar shared across conditions.
pub struct StationSetup {
    pub data: Arc<StationData>,
    /// Simulator snapshots indexed by time id; empty for record-only setups.
    pub snapshots: Arc<[GriddedField]>,
    pub aux: Arc<[GriddedField]>,
    /// Every time id in calendar order.
    pub time_ids: Vec<u32>,
    pub slots_per_day: usize,
    pub calendar: TimeSplit,
    pub domain_lo: Vec<f64>,
    pub domain_hi: Vec<f64>,
    /// Fit on the simulator snapshots (or the records when there are none).
    pub normalizer: Normalizer,
}

impl StationSetup {
    pub fn generate(config: &StationWorldConfig, seed: u64) -> Result<Self> {
        let world = generate_station_world(config, &mut derived(seed, &[label_key("world")]))?;
        Self::from_world(&world)
    }

    pub fn from_world(world: &StationWorld) -> Result<Self> {
        let config = &world.config;
        let snapshots: Arc<[GriddedField]> = world.sim_snapshots.clone().into();
        let normalizer = Normalizer::fit(
            config.domain_lo.to_vec(),
            config.domain_hi.to_vec(),
            snapshots.iter().flat_map(|s| s.values.iter().copied()),
        )?;
        let time_ids: Vec<u32> = (0..config.n_times as u32).collect();
        Ok(StationSetup {
            data: Arc::new(world.stations.clone()),
            snapshots,
            aux: world.aux_channels().into(),
            calendar: split_times(&time_ids, config.slots_per_day)?,
            time_ids,
            slots_per_day: config.slots_per_day,
            domain_lo: config.domain_lo.to_vec(),
            domain_hi: config.domain_hi.to_vec(),
            normalizer,
        })
    }

    /// Setup over station records alone, e.g. user-supplied observations.
    /// The calendar is the sorted set of time ids present in `data`.
    pub fn from_records(
        data: StationData,
        aux: Vec<GriddedField>,
        slots_per_day: usize,
        domain_lo: Vec<f64>,
        domain_hi: Vec<f64>,
    ) -> Result<Self> {
        let time_ids = data.time_ids();
        let normalizer = Normalizer::fit(domain_lo.clone(), domain_hi.clone(), data.all_values())?;
        Ok(StationSetup {
            calendar: split_times(&time_ids, slots_per_day)?,
            data: Arc::new(data),
            snapshots: Vec::new().into(),
            aux: aux.into(),
            time_ids,
            slots_per_day,
            domain_lo,
            domain_hi,
            normalizer,
        })
    }

    /// Station and time split for one condition. Time subsets depend only on
    /// the replicate, so smaller N_times nest inside larger ones.
    pub fn plan(&self, n_stations: usize, n_times: usize, master_seed: u64, replicate: usize) -> Result<SplitPlan> {
        SplitPlan::build(&PlanRequest {
            station_coords: &self.data.station_coords,
            dim: self.data.dim,
            calendar: &self.time_ids,
            slots_per_day: self.slots_per_day,
            n_stations,
            n_times,
            master_seed,
            time_seed: derive_seed(master_seed, &[label_key("times"), replicate as u64]),
        })
    }

    /// Gridded simulator tasks at the first `n` calendar validation times.
    pub fn sim_val_tasks(&self, n: usize, seed: u64) -> Vec<Task> {
        self.calendar
            .val
            .iter()
            .take(n)
            .map(|&t| {
                let mut rng = derived(seed, &[u64::from(t)]);
                make_grid_task(&self.snapshots[t as usize], t, TaskKind::Val, &self.aux, &mut rng)
            })
            .collect()
    }

    pub fn sim_stream(&self, rng: Rng) -> Result<GridTaskStream> {
        if self.snapshots.is_empty() {
            return Err(Error::Config("no simulator snapshots to pre-train on".into()));
        }
        GridTaskStream::new(self.snapshots.clone(), self.calendar.train.clone(), self.aux.clone(), rng)
    }

    /// Pre-trains a fresh model on the simulator over the calendar train period.
    pub fn pretrain(
        &self,
        model: &ModelConfig,
        cfg: &TrainConfig,
        n_val: usize,
        seed: u64,
    ) -> Result<(Sim2RealModel, TrainingOutcome)> {
        let net = ConvCnp::new(model.clone(), derive_seed(seed, &[label_key("init")]))?;
        let mut m = Sim2RealModel::new(net, self.normalizer.clone())?;
        let val = self.sim_val_tasks(n_val, derive_seed(seed, &[label_key("val")]));
        let mut stream = self.sim_stream(derived(seed, &[label_key("stream")]))?;
        let cfg = TrainConfig {
            seed,
            ..cfg.clone()
        };
        let outcome = pretrain(&mut m, &mut stream, &val, &cfg)?;
        Ok((m, outcome))
    }

    /// Test tasks over every calendar test time with at least one reporting
    /// test station.
    pub fn test_tasks(&self, plan: &SplitPlan) -> Result<Vec<Task>> {
        let mut out = Vec::new();
        for &t in &plan.test_times {
            let task = make_test_task(&self.data, t, plan, &self.aux)?;
            if !task.targets.is_empty() {
                out.push(task);
            }
        }
        Ok(out)
    }

    pub fn val_tasks(&self, plan: &SplitPlan) -> Result<Vec<Task>> {
        let mut out = Vec::new();
        for &t in &plan.val_times {
            let task = make_val_task(&self.data, t, plan, &self.aux)?;
            if !task.targets.is_empty() {
                out.push(task);
            }
        }
        Ok(out)
    }

    pub fn train_stream(&self, plan: &SplitPlan, rng: Rng) -> Result<StationTaskStream> {
        StationTaskStream::new(
            self.data.clone(),
            plan.train_times.clone(),
            plan.train_stations.clone(),
            self.aux.clone(),
            rng,
        )
    }

    /// Trains from scratch on the station data of `plan` alone.
    pub fn real_only(&self, plan: &SplitPlan, model: &ModelConfig, cfg: &TrainConfig, seed: u64) -> Result<Sim2RealModel> {
        let mut values = Vec::new();
        for &t in &plan.train_times {
            values.extend(self.data.observations(t, &plan.train_stations).0.values);
        }
        let normalizer = Normalizer::fit(self.domain_lo.clone(), self.domain_hi.clone(), values)?;
        let net = ConvCnp::new(model.clone(), derive_seed(seed, &[label_key("init")]))?;
        let mut m = Sim2RealModel::new(net, normalizer)?;
        let val = self.val_tasks(plan)?;
        let mut stream = self.train_stream(plan, derived(seed, &[label_key("stream")]))?;
        let cfg = TrainConfig {
            seed,
            ..cfg.clone()
        };
        pretrain(&mut m, &mut stream, &val, &cfg)?;
        Ok(m)
    }
}

/// World config with the calendar stretched to fit the largest N_times.
pub fn sized_world(spec: &ExperimentSpec) -> StationWorldConfig {
    let mut world = spec.world.clone();
    let need = spec
        .n_times_grid
        .iter()
        .map(|&n| required_calendar(n, world.slots_per_day))
        .max()
        .unwrap_or(0);
    if need > world.n_times {
        log::info!("extending the calendar from {} to {need} slots", world.n_times);
        world.n_times = need;
    }
    world
}

pub(crate) fn run(
    spec: &ExperimentSpec,
    setup: &StationSetup,
    pretrained: &Sim2RealModel,
    out: Option<&Path>,
) -> Result<Vec<ResultRecord>> {
    let seed = spec.master_seed;
    let mut records = Vec::new();
    for &ns in &spec.n_stations_grid {
        for &nt in &spec.n_times_grid {
            let cond = condition_label(ns, nt);
            log::info!("condition {cond}");
            let test = setup.test_tasks(&setup.plan(ns, nt, seed, 0)?)?;
            let base = ResultRecord {
                kind: spec.kind.to_string(),
                condition: cond.clone(),
                strategy: String::new(),
                n_tasks: None,
                n_stations: Some(ns),
                n_times: Some(nt),
                replicate: 0,
                test_nll: f64::NAN,
                test_mae: f64::NAN,
                oracle_nll: None,
                status: String::new(),
            };
            let mut jobs = Vec::new();
            if spec.baselines.contains(&Baseline::SimOnly) {
                jobs.push(Job::Baseline(Baseline::SimOnly, None, 0));
            }
            for r in 0..spec.n_replicates {
                for &s in &spec.strategies {
                    jobs.push(Job::Adapt(s, nt, r));
                }
                if spec.baselines.contains(&Baseline::RealOnly) {
                    jobs.push(Job::Baseline(Baseline::RealOnly, Some(nt), r));
                }
            }
            let results: Vec<ResultRecord> = jobs
                .par_iter()
                .map(|job| {
                    let trained: Result<Sim2RealModel> = match *job {
                        Job::Adapt(kind, _, r) => setup.plan(ns, nt, seed, r).and_then(|plan| {
                            let stream_seed = derive_seed(
                                seed,
                                &[label_key("finetune"), ns as u64, nt as u64, label_key(kind.as_str()), r as u64],
                            );
                            let mut stream = setup.train_stream(&plan, derived(stream_seed, &[]))?;
                            let val = setup.val_tasks(&plan)?;
                            let strategy = AdaptationStrategy {
                                kind,
                                config: TrainConfig {
                                    seed: stream_seed,
                                    ..spec.finetune.clone()
                                },
                            };
                            finetune(pretrained, &strategy, &mut stream, &val).map(|(m, _)| m)
                        }),
                        Job::Baseline(Baseline::RealOnly, _, r) => setup.plan(ns, nt, seed, r).and_then(|plan| {
                            let run_seed = derive_seed(seed, &[label_key("real_only"), ns as u64, nt as u64, r as u64]);
                            setup.real_only(&plan, &spec.model, &spec.real_only, run_seed)
                        }),
                        Job::Baseline(..) => Ok(pretrained.clone()),
                    };
                    let eval = trained.and_then(|m| {
                        if let Some(dir) = out.filter(|_| spec.save_checkpoints) {
                            save_model(&m, &model_path(dir, &cond, job))?;
                        }
                        evaluate(&m, &test)
                    });
                    record_for(&base, job, eval)
                })
                .collect();
            records.extend(results);
        }
    }
    Ok(records)
}
