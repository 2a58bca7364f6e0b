//! A synthetic 2D "weather" world: a coarse noise-free simulator grid and
//! noisy off-grid stations that share the same long-lengthscale field.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::kernel::{cholesky_with_jitter, gram, SeKernelParams};
use crate::data::{sq_dist, GriddedField, PointSet};
use crate::error::{Error, Result};
use crate::kv::{fmt_f64, KvFile};
use crate::rng::{derived, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct StationWorldConfig {
    pub domain_lo: [f64; 2],
    pub domain_hi: [f64; 2],
    /// Simulator grid spacing; the shortest lengthscale the simulator can carry.
    pub sim_grid_spacing: f64,
    /// Total station pool, including held-out test stations.
    pub n_stations: usize,
    pub n_times: usize,
    pub slots_per_day: usize,
    pub long_component: SeKernelParams,
    pub short_component: SeKernelParams,
    pub station_noise_std: f64,
    pub aux_field_seed: u64,
    pub aux_lengthscale: f64,
    /// Minimum distance between two stations (dart-throwing placement).
    pub station_min_separation: f64,
}

impl Default for StationWorldConfig {
    fn default() -> Self {
        let sim_grid_spacing = 0.05;
        StationWorldConfig {
            domain_lo: [0.0, 0.0],
            domain_hi: [1.0, 1.0],
            sim_grid_spacing,
            n_stations: 600,
            // ten 29.5-day split cycles at four slots per day
            n_times: 1180,
            slots_per_day: 4,
            long_component: SeKernelParams {
                lengthscale: 0.2,
                signal_std: 1.0,
                noise_std: 0.0,
            },
            short_component: SeKernelParams {
                lengthscale: 0.01,
                signal_std: 0.15,
                noise_std: 0.0,
            },
            station_noise_std: 0.05,
            aux_field_seed: 17,
            aux_lengthscale: 0.1,
            station_min_separation: sim_grid_spacing / 5.0,
        }
    }
}

impl StationWorldConfig {
    pub fn validate(&self) -> Result<()> {
        let short = self.short_component.lengthscale;
        let long = self.long_component.lengthscale;
        if !(short < self.sim_grid_spacing && self.sim_grid_spacing < long) {
            return Err(Error::config(format!(
                "need short lengthscale < sim grid spacing < long lengthscale, got {short} / {} / {long}",
                self.sim_grid_spacing
            )));
        }
        if self.n_stations == 0 || self.n_times == 0 || self.slots_per_day == 0 {
            return Err(Error::config("station world counts must be positive"));
        }
        if !(self.short_component.signal_std >= 0.0) || !(self.station_noise_std >= 0.0) {
            return Err(Error::config("short component and station noise must be non-negative"));
        }
        for d in 0..2 {
            if !(self.domain_hi[d] > self.domain_lo[d]) {
                return Err(Error::config("empty station-world domain"));
            }
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set_list("domain_lo", &self.domain_lo.map(fmt_f64));
        kv.set_list("domain_hi", &self.domain_hi.map(fmt_f64));
        kv.set("sim_grid_spacing", fmt_f64(self.sim_grid_spacing));
        kv.set("n_stations", self.n_stations);
        kv.set("n_times", self.n_times);
        kv.set("slots_per_day", self.slots_per_day);
        kv.set("long_lengthscale", fmt_f64(self.long_component.lengthscale));
        kv.set("long_signal_std", fmt_f64(self.long_component.signal_std));
        kv.set("short_lengthscale", fmt_f64(self.short_component.lengthscale));
        kv.set("short_signal_std", fmt_f64(self.short_component.signal_std));
        kv.set("station_noise_std", fmt_f64(self.station_noise_std));
        kv.set("aux_field_seed", self.aux_field_seed);
        kv.set("aux_lengthscale", fmt_f64(self.aux_lengthscale));
        kv.set("station_min_separation", fmt_f64(self.station_min_separation));
        kv
    }

    /// Keys absent from `kv` take their default value.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let d = Self::default();
        let pair = |key: &str, default: [f64; 2]| -> Result<[f64; 2]> {
            let v: Vec<f64> = kv.get_list_or(key, default.to_vec())?;
            v.try_into().map_err(|_| Error::InvalidValue {
                key: key.into(),
                value: kv.raw(key).unwrap_or_default().into(),
            })
        };
        let spacing = kv.get_or("sim_grid_spacing", d.sim_grid_spacing)?;
        let cfg = StationWorldConfig {
            domain_lo: pair("domain_lo", d.domain_lo)?,
            domain_hi: pair("domain_hi", d.domain_hi)?,
            sim_grid_spacing: spacing,
            n_stations: kv.get_or("n_stations", d.n_stations)?,
            n_times: kv.get_or("n_times", d.n_times)?,
            slots_per_day: kv.get_or("slots_per_day", d.slots_per_day)?,
            long_component: SeKernelParams {
                lengthscale: kv.get_or("long_lengthscale", d.long_component.lengthscale)?,
                signal_std: kv.get_or("long_signal_std", d.long_component.signal_std)?,
                noise_std: 0.0,
            },
            short_component: SeKernelParams {
                lengthscale: kv.get_or("short_lengthscale", d.short_component.lengthscale)?,
                signal_std: kv.get_or("short_signal_std", d.short_component.signal_std)?,
                noise_std: 0.0,
            },
            station_noise_std: kv.get_or("station_noise_std", d.station_noise_std)?,
            aux_field_seed: kv.get_or("aux_field_seed", d.aux_field_seed)?,
            aux_lengthscale: kv.get_or("aux_lengthscale", d.aux_lengthscale)?,
            station_min_separation: kv.get_or("station_min_separation", spacing / 5.0)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn sim_shape(&self) -> [usize; 2] {
        let n = |d: usize| {
            ((self.domain_hi[d] - self.domain_lo[d]) / self.sim_grid_spacing + 1e-9).floor() as usize + 1
        };
        [n(0), n(1)]
    }
}

/// Off-grid observations keyed by time, with fixed station locations.
#[derive(Clone, Debug, PartialEq)]
pub struct StationData {
    pub dim: usize,
    pub station_ids: Vec<u32>,
    /// Flat coordinates, `dim` per station, aligned with `station_ids`.
    pub station_coords: Vec<f64>,
    /// time id → (index into `station_ids`, value) for every reporting station,
    /// sorted by station index.
    pub by_time: BTreeMap<u32, Vec<(usize, f64)>>,
}

impl StationData {
    pub fn n_stations(&self) -> usize {
        self.station_ids.len()
    }

    pub fn station_point(&self, index: usize) -> &[f64] {
        &self.station_coords[index * self.dim..(index + 1) * self.dim]
    }

    pub fn time_ids(&self) -> Vec<u32> {
        self.by_time.keys().copied().collect()
    }

    /// Observations at `time_id` restricted to the given station indices
    /// (in that order); missing stations are skipped and returned separately.
    pub fn observations(&self, time_id: u32, stations: &[usize]) -> (PointSet, Vec<usize>, Vec<usize>) {
        let mut out = PointSet::empty(self.dim);
        let mut present = Vec::new();
        let mut missing = Vec::new();
        let reports = self.by_time.get(&time_id);
        for &s in stations {
            let value = reports.and_then(|r| lookup(r, s));
            match value {
                Some(v) => {
                    out.push(self.station_point(s), v);
                    present.push(s);
                }
                None => missing.push(s),
            }
        }
        (out, present, missing)
    }

    pub fn all_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.by_time.values().flat_map(|r| r.iter().map(|(_, v)| *v))
    }
}

/// Reports are sorted by station index and usually dense.
fn lookup(reports: &[(usize, f64)], station: usize) -> Option<f64> {
    match reports.get(station) {
        Some(&(i, v)) if i == station => Some(v),
        _ => reports
            .binary_search_by_key(&station, |&(i, _)| i)
            .ok()
            .map(|k| reports[k].1),
    }
}

#[derive(Clone, Debug)]
pub struct StationWorld {
    pub config: StationWorldConfig,
    /// Long component on the simulator grid, one snapshot per time id.
    pub sim_snapshots: Vec<GriddedField>,
    pub stations: StationData,
    /// Long component at each station, per time (the latent both sides share).
    pub long_at_stations: Vec<Vec<f64>>,
    /// Static elevation-like field on a grid finer than the simulator grid.
    pub aux: GriddedField,
}

impl StationWorld {
    /// Gridded auxiliary inputs in model order: static field, then each coordinate.
    pub fn aux_channels(&self) -> Vec<GriddedField> {
        let mut out = vec![self.aux.clone()];
        let coords = self.aux.node_coords();
        for d in 0..2 {
            out.push(GriddedField {
                values: coords.iter().skip(d).step_by(2).copied().collect(),
                ..self.aux.clone()
            });
        }
        out
    }
}

pub fn generate_station_world(config: &StationWorldConfig, rng: &mut Rng) -> Result<StationWorld> {
    config.validate()?;
    let station_coords = place_stations(config, rng)?;
    let n_st = config.n_stations;

    let sim_shape = config.sim_shape();
    let sim_origin = config.domain_lo.to_vec();
    let sim = GriddedField {
        origin: sim_origin.clone(),
        spacing: config.sim_grid_spacing,
        shape: sim_shape.to_vec(),
        values: Vec::new(),
    };
    let grid_coords = sim.node_coords();
    let n_grid = grid_coords.len() / 2;

    // Long field jointly on grid nodes and stations.
    let mut joint = grid_coords.clone();
    joint.extend_from_slice(&station_coords);
    let long = &config.long_component;
    let (long_chol, _) = cholesky_with_jitter(&gram(&joint, &joint, 2, long), long.signal_var(), &joint, 2, false)?;
    let long_l = long_chol.l();

    let short = &config.short_component;
    let short_l = if short.signal_std > 0.0 {
        let g = gram(&station_coords, &station_coords, 2, short);
        Some(cholesky_with_jitter(&g, short.signal_var(), &station_coords, 2, false)?.0.l())
    } else {
        None
    };

    let mut sim_snapshots = Vec::with_capacity(config.n_times);
    let mut long_at_stations = Vec::with_capacity(config.n_times);
    let mut by_time = BTreeMap::new();
    for t in 0..config.n_times {
        let z = DVector::from_fn(joint.len() / 2, |_, _| StandardNormal.sample(rng));
        let f = &long_l * z;
        sim_snapshots.push(GriddedField {
            values: f.rows(0, n_grid).iter().copied().collect(),
            ..sim.clone()
        });
        let long_st: Vec<f64> = f.rows(n_grid, n_st).iter().copied().collect();
        let short_st: Vec<f64> = match &short_l {
            Some(l) => {
                let z = DVector::from_fn(n_st, |_, _| StandardNormal.sample(rng));
                (l * z).iter().copied().collect()
            }
            None => vec![0.0; n_st],
        };
        let reports = (0..n_st)
            .map(|s| {
                let eps: f64 = StandardNormal.sample(rng);
                (s, long_st[s] + short_st[s] + config.station_noise_std * eps)
            })
            .collect();
        by_time.insert(t as u32, reports);
        long_at_stations.push(long_st);
    }

    let aux = sample_aux_field(config)?;
    Ok(StationWorld {
        config: config.clone(),
        sim_snapshots,
        stations: StationData {
            dim: 2,
            station_ids: (0..n_st as u32).collect(),
            station_coords,
            by_time,
        },
        long_at_stations,
        aux,
    })
}

fn place_stations(config: &StationWorldConfig, rng: &mut Rng) -> Result<Vec<f64>> {
    let min_d2 = config.station_min_separation.powi(2);
    let max_attempts = 1000 * config.n_stations;
    let mut coords: Vec<f64> = Vec::with_capacity(2 * config.n_stations);
    let mut attempts = 0;
    while coords.len() < 2 * config.n_stations {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::config(format!(
                "cannot place {} stations with minimum separation {} (placed {})",
                config.n_stations,
                config.station_min_separation,
                coords.len() / 2
            )));
        }
        let p = [
            rng.random_range(config.domain_lo[0]..config.domain_hi[0]),
            rng.random_range(config.domain_lo[1]..config.domain_hi[1]),
        ];
        if coords.chunks_exact(2).all(|q| sq_dist(q, &p) >= min_d2) {
            coords.extend_from_slice(&p);
        }
    }
    Ok(coords)
}

fn sample_aux_field(config: &StationWorldConfig) -> Result<GriddedField> {
    let spacing = config.sim_grid_spacing / 2.0;
    let n = |d: usize| ((config.domain_hi[d] - config.domain_lo[d]) / spacing + 1e-9).floor() as usize + 1;
    let mut field = GriddedField {
        origin: config.domain_lo.to_vec(),
        spacing,
        shape: vec![n(0), n(1)],
        values: Vec::new(),
    };
    let params = SeKernelParams {
        lengthscale: config.aux_lengthscale,
        signal_std: 1.0,
        noise_std: 0.0,
    };
    let coords = field.node_coords();
    let mut rng = derived(config.aux_field_seed, &[]);
    let sample = super::gp::sample_gp_field(&params, &coords, 2, &mut rng)?;
    field.values = sample.latent_values;
    Ok(field)
}

/// Smallest pairwise distance among flat 2D coordinates.
pub fn min_pairwise_distance(coords: &[f64], dim: usize) -> f64 {
    let n = coords.len() / dim;
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            best = best.min(sq_dist(&coords[i * dim..(i + 1) * dim], &coords[j * dim..(j + 1) * dim]));
        }
    }
    best.sqrt()
}
