//! Data sections shared by the `pretrain`, `finetune`, `evaluate` and
//! `diagnose-artefacts` configs.
//!
//! ```text
//! data = gp            # gp | world | stations
//! seed = 0
//! gp.lengthscale = 0.25
//! gp.noise_std = 0.05
//! gp.n_tasks = 64      # fine-tuning draws (or gp.draws = <csv>)
//! gp.n_test_tasks = 512
//! world.n_stations = 600  # any StationWorldConfig field
//! stations.records = <csv>
//! stations.aux = <gridded csv>
//! stations.slots_per_day = 4
//! split.n_stations = 500
//! split.n_times = 80
//! split.replicate = 0
//! ```

use std::path::{Path, PathBuf};

use sim2real_core::experiments::{gp_condition_label, gp_tasks, station_condition_label, GpDataset, StationSetup};
use sim2real_core::field_models::io::{read_draws_csv, read_gridded_csv, read_station_csv};
use sim2real_core::field_models::{SeKernelParams, StationWorldConfig};
use sim2real_core::kv::KvFile;
use sim2real_core::rng::{derive_seed, derived, label_key};
use sim2real_core::taskgen::{SplitPlan, Task, TaskKind};
use sim2real_core::{Error, Result};

pub const DEFAULT_N_TASKS: usize = 64;
pub const DEFAULT_N_TEST_TASKS: usize = 512;

/// `l=0.25,noise=0.05`
pub fn parse_kernel(text: &str) -> Result<SeKernelParams> {
    let mut l = None;
    let mut noise = None;
    for part in text.split(',') {
        let (k, v) = part.split_once('=').ok_or_else(|| invalid("kernel", text))?;
        let v: f64 = v.trim().parse().map_err(|_| invalid("kernel", text))?;
        match k.trim() {
            "l" | "lengthscale" => l = Some(v),
            "noise" | "noise_std" => noise = Some(v),
            _ => return Err(invalid("kernel", text)),
        }
    }
    let l = l.ok_or_else(|| Error::MissingKey("kernel l".into()))?;
    let noise = noise.ok_or_else(|| Error::MissingKey("kernel noise".into()))?;
    SeKernelParams::new(l, noise)
}

fn invalid(key: &str, value: &str) -> Error {
    Error::InvalidValue {
        key: key.into(),
        value: value.into(),
    }
}

pub enum Source {
    Gp {
        params: SeKernelParams,
        draws: Option<PathBuf>,
        n_tasks: usize,
        n_test_tasks: usize,
    },
    Stations {
        setup: Box<StationSetup>,
        plan: SplitPlan,
        label: String,
    },
}

/// Resolved seed: `--seed` beats the config's `seed` key.
pub fn seed_of(kv: &KvFile, over: Option<u64>) -> Result<u64> {
    match over {
        Some(s) => Ok(s),
        None => kv.get_or("seed", 0),
    }
}

pub fn world_config(kv: &KvFile) -> Result<StationWorldConfig> {
    let mut merged = StationWorldConfig::default().to_kv();
    let section = kv.section("world");
    for key in section.keys() {
        merged.set(key, section.raw(key).unwrap_or_default());
    }
    StationWorldConfig::from_kv(&merged)
}

fn split_plan(kv: &KvFile, setup: &StationSetup, seed: u64, plan_path: Option<&Path>) -> Result<SplitPlan> {
    match plan_path {
        Some(path) => {
            let plan = SplitPlan::from_kv(&KvFile::load(path)?)?;
            plan.validate()?;
            Ok(plan)
        }
        None => setup.plan(
            kv.get("split.n_stations")?,
            kv.get("split.n_times")?,
            seed,
            kv.get_or("split.replicate", 0)?,
        ),
    }
}

impl Source {
    pub fn from_config(kv: &KvFile, seed: u64, plan_path: Option<&Path>) -> Result<Self> {
        let kind: String = kv.get("data")?;
        match kind.as_str() {
            "gp" => Ok(Source::Gp {
                params: SeKernelParams::new(kv.get("gp.lengthscale")?, kv.get("gp.noise_std")?)?,
                draws: kv.raw("gp.draws").map(PathBuf::from),
                n_tasks: kv.get_or("gp.n_tasks", DEFAULT_N_TASKS)?,
                n_test_tasks: kv.get_or("gp.n_test_tasks", DEFAULT_N_TEST_TASKS)?,
            }),
            "world" => {
                let setup = StationSetup::generate(&world_config(kv)?, seed)?;
                Self::stations(kv, setup, seed, plan_path)
            }
            "stations" => {
                let data = read_station_csv(Path::new(&kv.get::<String>("stations.records")?))?;
                let aux = match kv.raw("stations.aux") {
                    Some(path) => read_gridded_csv(Path::new(path))?.into_iter().map(|(_, g)| g).collect(),
                    None => Vec::new(),
                };
                let (lo, hi) = bounding_box(&data.station_coords, data.dim);
                let setup = StationSetup::from_records(
                    data,
                    aux,
                    kv.get_or("stations.slots_per_day", 4)?,
                    kv.get_list_or("stations.domain_lo", lo)?,
                    kv.get_list_or("stations.domain_hi", hi)?,
                )?;
                Self::stations(kv, setup, seed, plan_path)
            }
            other => Err(invalid("data", other)),
        }
    }

    fn stations(kv: &KvFile, setup: StationSetup, seed: u64, plan_path: Option<&Path>) -> Result<Self> {
        let plan = split_plan(kv, &setup, seed, plan_path)?;
        let label = station_condition_label(plan.n_stations, plan.n_times);
        Ok(Source::Stations {
            setup: Box::new(setup),
            plan,
            label,
        })
    }

    pub fn label(&self) -> String {
        match self {
            Source::Gp { params, .. } => gp_condition_label(params),
            Source::Stations { label, .. } => label.clone(),
        }
    }

    pub fn test_tasks(&self, seed: u64) -> Result<Vec<Task>> {
        match self {
            Source::Gp {
                params, n_test_tasks, ..
            } => gp_tasks(params, *n_test_tasks, TaskKind::Test, &mut derived(seed, &[label_key("test")])),
            Source::Stations { setup, plan, .. } => setup.test_tasks(plan),
        }
    }

    /// Fine-tuning data for GP sources: the draws file or fresh draws.
    pub fn gp_dataset(&self, seed: u64) -> Result<GpDataset> {
        let Source::Gp {
            params, draws, n_tasks, ..
        } = self
        else {
            return Err(Error::Config("not a GP data source".into()));
        };
        let mut rng = derived(seed, &[label_key("dataset")]);
        match draws {
            Some(path) => Ok(GpDataset::from_draws(read_draws_csv(path)?, &mut rng)),
            None => sim2real_core::experiments::gp_dataset(params, *n_tasks, &mut rng),
        }
    }

    pub fn stream_seed(seed: u64) -> u64 {
        derive_seed(seed, &[label_key("stream")])
    }
}

fn bounding_box(coords: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in coords.chunks_exact(dim) {
        for d in 0..dim {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    (lo, hi)
}
