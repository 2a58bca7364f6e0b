//! Experiment grids: pre-train once, adapt per condition and replicate,
//! evaluate on held-out tasks and collect one record per run.

mod artefacts;
mod gp;
mod records;
mod spec;
mod station;

use std::path::{Path, PathBuf};

pub use artefacts::{artefact_score, mean_artefact_score};
pub use gp::{gp_dataset, gp_normalizer, gp_pretrain, gp_tasks, infinite_data_baseline, GpDataset};
pub use records::{
    aggregate_ci, format_results_csv, mean_ci, parse_results_csv, pooled_half_width, read_results_csv,
    write_results_csv, Aggregate, GroupKey, Metric, ResultRecord, RESULTS_HEADER,
};
pub use spec::{Baseline, ExperimentKind, ExperimentSpec, PRESET_NAMES};
pub use station::{required_calendar, sized_world, StationSetup};

use crate::error::Result;
use crate::finetune::AdaptationKind;
use crate::kv::KvFile;
use crate::rng::{derive_seed, label_key};
use crate::training::{write_training_log, Evaluation, Sim2RealModel};

pub const RESULTS_FILE: &str = "results.csv";
pub const PRETRAIN_LOG_FILE: &str = "pretrain_log.csv";
pub const PRETRAINED_FILE: &str = "pretrained.ckpt";

pub use gp::condition_label as gp_condition_label;
pub use station::condition_label as station_condition_label;

#[derive(Clone, Copy, Debug)]
pub(crate) enum Job {
    /// Baseline, its N (real-only runs), replicate.
    Baseline(Baseline, Option<usize>, usize),
    /// Strategy, N_tasks or N_times, replicate.
    Adapt(AdaptationKind, usize, usize),
}

impl Job {
    fn strategy(&self) -> &'static str {
        match self {
            Job::Baseline(b, ..) => b.as_str(),
            Job::Adapt(k, ..) => k.as_str(),
        }
    }
}

pub(crate) fn record_for(base: &ResultRecord, job: &Job, eval: Result<Evaluation>) -> ResultRecord {
    let (n, replicate) = match *job {
        Job::Baseline(_, n, r) => (n, r),
        Job::Adapt(_, n, r) => (Some(n), r),
    };
    let mut rec = ResultRecord {
        strategy: job.strategy().to_string(),
        replicate,
        ..base.clone()
    };
    if rec.n_times.is_none() {
        rec.n_tasks = n;
    }
    match eval {
        Ok(e) => {
            rec.test_nll = e.nll;
            rec.test_mae = e.mae;
            rec.status = "ok".into();
        }
        Err(err) => {
            log::warn!("{} {} replicate {replicate} failed: {err}", rec.condition, rec.strategy);
            rec.status = "failed".into();
        }
    }
    rec
}

pub(crate) fn model_path(dir: &Path, condition: &str, job: &Job) -> PathBuf {
    let cond: String = condition.chars().filter(|c| !matches!(c, '=')).map(|c| if c == ' ' { '_' } else { c }).collect();
    let name = match *job {
        Job::Baseline(b, None, r) => format!("{cond}_{}_r{r}.ckpt", b.as_str()),
        Job::Baseline(b, Some(n), r) => format!("{cond}_{}_n{n}_r{r}.ckpt", b.as_str()),
        Job::Adapt(k, n, r) => format!("{cond}_{}_n{n}_r{r}.ckpt", k.as_str()),
    };
    dir.join("models").join(name)
}

pub(crate) fn save_model(model: &Sim2RealModel, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    model.save(path, &KvFile::default())
}

/// Runs the whole grid. With `out_dir`, writes `results.csv`, the
/// pre-training log and (if requested) every checkpoint there.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: Option<&Path>) -> Result<Vec<ResultRecord>> {
    spec.validate()?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let pretrain_seed = derive_seed(spec.master_seed, &[label_key("pretrain")]);
    let load = |path: &PathBuf| -> Result<Sim2RealModel> {
        let (m, _) = Sim2RealModel::load(path)?;
        if m.net.config() != &spec.model {
            log::warn!("{} was built with a different model config; using the checkpoint's", path.display());
        }
        Ok(m)
    };
    let records = if spec.kind.is_gp() {
        let pretrained = match &spec.pretrained {
            Some(path) => load(path)?,
            None => {
                let (m, outcome) =
                    gp_pretrain(&spec.model, &spec.sim_params, &spec.pretrain, spec.n_val_tasks, pretrain_seed)?;
                if let Some(dir) = out_dir {
                    write_training_log(&dir.join(PRETRAIN_LOG_FILE), &outcome.log)?;
                }
                m
            }
        };
        if let (Some(dir), None) = (out_dir, &spec.pretrained) {
            pretrained.save(&dir.join(PRETRAINED_FILE), &KvFile::default())?;
        }
        gp::run(spec, &pretrained, out_dir)?
    } else {
        let setup = StationSetup::generate(&sized_world(spec), spec.master_seed)?;
        let pretrained = match &spec.pretrained {
            Some(path) => load(path)?,
            None => {
                let (m, outcome) = setup.pretrain(&spec.model, &spec.pretrain, spec.n_sim_val_tasks, pretrain_seed)?;
                if let Some(dir) = out_dir {
                    write_training_log(&dir.join(PRETRAIN_LOG_FILE), &outcome.log)?;
                    m.save(&dir.join(PRETRAINED_FILE), &KvFile::default())?;
                }
                m
            }
        };
        station::run(spec, &setup, &pretrained, out_dir)?
    };
    if let Some(dir) = out_dir {
        write_results_csv(&dir.join(RESULTS_FILE), &records)?;
    }
    Ok(records)
}
