use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::convcnp::ModelConfig;
use crate::error::{Error, Result};
use crate::field_models::{SeKernelParams, StationWorldConfig};
use crate::finetune::AdaptationKind;
use crate::kv::{fmt_f64, KvFile};
use crate::training::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    ShrinkL,
    GrowL,
    NoiseChange,
    StationWorld,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::ShrinkL => "shrink_l",
            ExperimentKind::GrowL => "grow_l",
            ExperimentKind::NoiseChange => "noise_change",
            ExperimentKind::StationWorld => "station_world",
        }
    }

    pub fn is_gp(&self) -> bool {
        *self != ExperimentKind::StationWorld
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shrink_l" => Ok(ExperimentKind::ShrinkL),
            "grow_l" => Ok(ExperimentKind::GrowL),
            "noise_change" => Ok(ExperimentKind::NoiseChange),
            "station_world" => Ok(ExperimentKind::StationWorld),
            other => Err(Error::InvalidValue {
                key: "kind".into(),
                value: other.into(),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Baseline {
    SimOnly,
    RealOnly,
    Oracle,
    InfiniteData,
}

impl Baseline {
    pub fn as_str(&self) -> &'static str {
        match self {
            Baseline::SimOnly => "sim_only",
            Baseline::RealOnly => "real_only",
            Baseline::Oracle => "oracle",
            Baseline::InfiniteData => "infinite_data",
        }
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim_only" => Ok(Baseline::SimOnly),
            "real_only" => Ok(Baseline::RealOnly),
            "oracle" => Ok(Baseline::Oracle),
            "infinite_data" => Ok(Baseline::InfiniteData),
            other => Err(Error::InvalidValue {
                key: "baselines".into(),
                value: other.into(),
            }),
        }
    }
}

/// A full experiment grid, readable from a flat key-value file.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub master_seed: u64,
    pub n_replicates: usize,
    pub strategies: Vec<AdaptationKind>,
    pub baselines: Vec<Baseline>,
    pub model: ModelConfig,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub real_only: TrainConfig,
    pub infinite_data: TrainConfig,
    /// Skip pre-training and start from this checkpoint.
    pub pretrained: Option<PathBuf>,
    /// Write every trained model next to the results.
    pub save_checkpoints: bool,

    pub sim_params: SeKernelParams,
    pub real_params: Vec<SeKernelParams>,
    pub n_tasks_grid: Vec<usize>,
    pub n_val_tasks: usize,
    pub n_test_tasks: usize,

    pub world: StationWorldConfig,
    pub n_stations_grid: Vec<usize>,
    pub n_times_grid: Vec<usize>,
    /// Cap on pre-training validation tasks drawn from the simulator.
    pub n_sim_val_tasks: usize,
}

pub const PRESET_NAMES: [&str; 4] = ["shrink_l", "grow_l", "noise_change", "station_world"];

fn se(lengthscale: f64, noise_std: f64) -> SeKernelParams {
    SeKernelParams {
        lengthscale,
        signal_std: 1.0,
        noise_std,
    }
}

impl ExperimentSpec {
    fn gp_base(kind: ExperimentKind, sim: SeKernelParams, real: Vec<SeKernelParams>) -> Self {
        ExperimentSpec {
            kind,
            master_seed: 0,
            n_replicates: 5,
            strategies: vec![AdaptationKind::Global, AdaptationKind::Film],
            baselines: vec![Baseline::SimOnly, Baseline::RealOnly, Baseline::Oracle, Baseline::InfiniteData],
            model: ModelConfig::desk_1d(),
            pretrain: TrainConfig::pretrain(),
            finetune: TrainConfig::finetune(),
            real_only: TrainConfig::pretrain(),
            infinite_data: TrainConfig::pretrain(),
            pretrained: None,
            save_checkpoints: false,
            sim_params: sim,
            real_params: real,
            n_tasks_grid: vec![16, 64, 256, 1024],
            n_val_tasks: 256,
            n_test_tasks: 512,
            world: StationWorldConfig::default(),
            n_stations_grid: Vec::new(),
            n_times_grid: Vec::new(),
            n_sim_val_tasks: 64,
        }
    }

    pub fn shrink_l() -> Self {
        Self::gp_base(
            ExperimentKind::ShrinkL,
            se(0.25, 0.05),
            vec![se(0.2, 0.05), se(0.1, 0.05), se(0.05, 0.05)],
        )
    }

    pub fn grow_l() -> Self {
        Self::gp_base(
            ExperimentKind::GrowL,
            se(0.2, 0.05),
            vec![se(0.25, 0.05), se(0.5, 0.05), se(1.0, 0.05)],
        )
    }

    pub fn noise_change() -> Self {
        Self::gp_base(
            ExperimentKind::NoiseChange,
            se(0.25, 0.05),
            [0.0125, 0.025, 0.1, 0.2].iter().map(|&s| se(0.25, s)).collect(),
        )
    }

    /// The full station grid; N_times of 2000 and 10000 lengthen the
    /// generated calendar accordingly and are expensive.
    pub fn station_world() -> Self {
        ExperimentSpec {
            kind: ExperimentKind::StationWorld,
            baselines: vec![Baseline::SimOnly, Baseline::RealOnly],
            model: ModelConfig::compact_2d(),
            n_tasks_grid: Vec::new(),
            real_params: Vec::new(),
            n_stations_grid: vec![20, 100, 500],
            n_times_grid: vec![16, 80, 400, 2000, 10000],
            ..Self::gp_base(ExperimentKind::StationWorld, se(0.2, 0.0), Vec::new())
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "shrink_l" => Ok(Self::shrink_l()),
            "grow_l" => Ok(Self::grow_l()),
            "noise_change" => Ok(Self::noise_change()),
            "station_world" => Ok(Self::station_world()),
            other => Err(Error::config(format!(
                "unknown preset {other:?}; expected one of {}",
                PRESET_NAMES.join(", ")
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_replicates == 0 {
            return Err(Error::config("n_replicates must be positive"));
        }
        self.model.validate()?;
        if self.kind.is_gp() {
            if self.model.input_dim != 1 {
                return Err(Error::config("GP experiments need a 1D model"));
            }
            self.sim_params.validate()?;
            for p in &self.real_params {
                p.validate()?;
            }
            if self.real_params.is_empty() {
                return Err(Error::config("GP experiments need at least one real condition"));
            }
            if self.n_tasks_grid.iter().any(|&n| n < 2) {
                return Err(Error::config("every N_tasks must be at least 2 (train and validation share)"));
            }
            if self.n_val_tasks == 0 || self.n_test_tasks == 0 {
                return Err(Error::config("n_val_tasks and n_test_tasks must be positive"));
            }
        } else {
            if self.model.input_dim != 2 {
                return Err(Error::config("station-world experiments need a 2D model"));
            }
            if self.model.n_aux_channels != 3 {
                return Err(Error::config("station-world models take 3 auxiliary channels"));
            }
            self.world.validate()?;
            if self.n_stations_grid.is_empty() || self.n_times_grid.is_empty() {
                return Err(Error::config("station-world experiments need N_stations and N_times grids"));
            }
            if self.n_times_grid.iter().any(|&n| n < 2) || self.n_stations_grid.iter().any(|&n| n < 2) {
                return Err(Error::config("N_stations and N_times must be at least 2"));
            }
        }
        if self.strategies.contains(&AdaptationKind::Film) && !self.model.film_enabled {
            return Err(Error::config("film strategy requested for a model without FiLM"));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set("kind", self.kind);
        kv.set("master_seed", self.master_seed);
        kv.set("n_replicates", self.n_replicates);
        kv.set_list("strategies", &self.strategies);
        kv.set_list("baselines", &self.baselines.iter().map(|b| b.as_str()).collect::<Vec<_>>());
        if let Some(p) = &self.pretrained {
            kv.set("pretrained", p.display());
        }
        kv.set("save_checkpoints", self.save_checkpoints);
        if self.kind.is_gp() {
            kv.set("sim.lengthscale", fmt_f64(self.sim_params.lengthscale));
            kv.set("sim.noise_std", fmt_f64(self.sim_params.noise_std));
            let ls: Vec<String> = self.real_params.iter().map(|p| fmt_f64(p.lengthscale)).collect();
            let ns: Vec<String> = self.real_params.iter().map(|p| fmt_f64(p.noise_std)).collect();
            kv.set_list("real.lengthscales", &ls);
            kv.set_list("real.noise_stds", &ns);
            kv.set_list("n_tasks", &self.n_tasks_grid);
            kv.set("n_val_tasks", self.n_val_tasks);
            kv.set("n_test_tasks", self.n_test_tasks);
        } else {
            kv.set_list("n_stations", &self.n_stations_grid);
            kv.set_list("n_times", &self.n_times_grid);
            kv.set("n_sim_val_tasks", self.n_sim_val_tasks);
            kv.merge_section("world", &self.world.to_kv());
        }
        kv.merge_section("model", &self.model.to_kv());
        kv.merge_section("pretrain", &self.pretrain.to_kv());
        kv.merge_section("finetune", &self.finetune.to_kv());
        kv.merge_section("real_only", &self.real_only.to_kv());
        if self.kind.is_gp() {
            kv.merge_section("infinite_data", &self.infinite_data.to_kv());
        }
        kv
    }

    /// `kind` (or `preset`) selects the defaults; every other key overrides.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let base = match kv.raw("preset") {
            Some(name) => Self::preset(name)?,
            None => Self::preset(kv.get::<ExperimentKind>("kind")?.as_str())?,
        };
        let kind = kv.get_or("kind", base.kind)?;
        let base = if kind == base.kind { base } else { Self::preset(kind.as_str())? };
        let model_kv = kv.section("model");
        let model = if model_kv.keys().next().is_some() {
            let mut merged = base.model.to_kv();
            if model_kv.contains("preset") {
                merged = KvFile::new();
            }
            for key in model_kv.keys() {
                merged.set(key, model_kv.raw(key).unwrap_or_default());
            }
            ModelConfig::from_kv(&merged)?
        } else {
            base.model.clone()
        };
        let real_params = if kv.contains("real.lengthscales") || kv.contains("real.noise_stds") {
            // an omitted list falls back to the preset's values, collapsed when constant
            let base_list = |f: fn(&SeKernelParams) -> f64| {
                let mut v: Vec<f64> = base.real_params.iter().map(f).collect();
                v.dedup();
                v
            };
            let ls: Vec<f64> = kv.get_list_or("real.lengthscales", base_list(|p| p.lengthscale))?;
            let ns: Vec<f64> = kv.get_list_or("real.noise_stds", base_list(|p| p.noise_std))?;
            broadcast_pairs(&ls, &ns)?.into_iter().map(|(l, n)| se(l, n)).collect()
        } else {
            base.real_params.clone()
        };
        let world_kv = kv.section("world");
        let world = if world_kv.keys().next().is_some() {
            let mut merged = base.world.to_kv();
            for key in world_kv.keys() {
                merged.set(key, world_kv.raw(key).unwrap_or_default());
            }
            StationWorldConfig::from_kv(&merged)?
        } else {
            base.world.clone()
        };
        let spec = ExperimentSpec {
            kind,
            master_seed: kv.get_or("master_seed", base.master_seed)?,
            n_replicates: kv.get_or("n_replicates", base.n_replicates)?,
            strategies: kv.get_list_or("strategies", base.strategies.clone())?,
            baselines: kv.get_list_or("baselines", base.baselines.clone())?,
            pretrain: TrainConfig::from_kv(&kv.section("pretrain"), &base.pretrain)?,
            finetune: TrainConfig::from_kv(&kv.section("finetune"), &base.finetune)?,
            real_only: TrainConfig::from_kv(&kv.section("real_only"), &base.real_only)?,
            infinite_data: TrainConfig::from_kv(&kv.section("infinite_data"), &base.infinite_data)?,
            pretrained: kv.raw("pretrained").filter(|s| !s.is_empty()).map(PathBuf::from),
            save_checkpoints: kv.get_or("save_checkpoints", base.save_checkpoints)?,
            sim_params: se(
                kv.get_or("sim.lengthscale", base.sim_params.lengthscale)?,
                kv.get_or("sim.noise_std", base.sim_params.noise_std)?,
            ),
            real_params,
            n_tasks_grid: kv.get_list_or("n_tasks", base.n_tasks_grid.clone())?,
            n_val_tasks: kv.get_or("n_val_tasks", base.n_val_tasks)?,
            n_test_tasks: kv.get_or("n_test_tasks", base.n_test_tasks)?,
            world,
            n_stations_grid: kv.get_list_or("n_stations", base.n_stations_grid.clone())?,
            n_times_grid: kv.get_list_or("n_times", base.n_times_grid.clone())?,
            n_sim_val_tasks: kv.get_or("n_sim_val_tasks", base.n_sim_val_tasks)?,
            model,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Pairs two lists elementwise; a single-element list is repeated.
fn broadcast_pairs(a: &[f64], b: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n = a.len().max(b.len());
    let pick = |v: &[f64], i: usize| if v.len() == 1 { Some(v[0]) } else { v.get(i).copied() };
    if (a.len() != n && a.len() != 1) || (b.len() != n && b.len() != 1) {
        return Err(Error::config(format!(
            "real.lengthscales has {} entries but real.noise_stds has {}",
            a.len(),
            b.len()
        )));
    }
    Ok((0..n).map(|i| (pick(a, i).unwrap(), pick(b, i).unwrap())).collect())
}
