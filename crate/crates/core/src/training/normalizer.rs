use crate::data::{GriddedField, PointSet};
use crate::error::{Error, Result};
use crate::kv::{fmt_f64, KvFile};
use crate::taskgen::Task;

/// Affine maps from raw coordinates to the unit box and from raw values
/// to zero mean, unit variance. Fitted once on pre-training data.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub coord_lo: Vec<f64>,
    pub coord_hi: Vec<f64>,
    pub value_mean: f64,
    pub value_std: f64,
}

impl Normalizer {
    pub fn new(coord_lo: Vec<f64>, coord_hi: Vec<f64>, value_mean: f64, value_std: f64) -> Result<Self> {
        if coord_lo.len() != coord_hi.len() || coord_lo.is_empty() {
            return Err(Error::config("normaliser bounds must share a non-zero dimension"));
        }
        if coord_lo.iter().zip(&coord_hi).any(|(l, h)| !(h > l)) {
            return Err(Error::config("normaliser needs hi > lo on every axis"));
        }
        if !(value_std > 0.0) || !value_mean.is_finite() || !value_std.is_finite() {
            return Err(Error::config(format!("invalid value normalisation {value_mean} / {value_std}")));
        }
        Ok(Normalizer {
            coord_lo,
            coord_hi,
            value_mean,
            value_std,
        })
    }

    /// Value statistics from `values`; a constant sample gets unit scale.
    pub fn fit(coord_lo: Vec<f64>, coord_hi: Vec<f64>, values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
        for v in values {
            n += 1;
            let d = v - mean;
            mean += d / n as f64;
            m2 += d * (v - mean);
        }
        if n == 0 {
            return Err(Error::config("cannot fit a normaliser to no values"));
        }
        let std = (m2 / n as f64).sqrt();
        Self::new(coord_lo, coord_hi, mean, if std > 0.0 { std } else { 1.0 })
    }

    pub fn dim(&self) -> usize {
        self.coord_lo.len()
    }

    fn scale(&self, d: usize) -> f64 {
        self.coord_hi[d] - self.coord_lo[d]
    }

    pub fn coords(&self, flat: &[f64]) -> Vec<f64> {
        let dim = self.dim();
        flat.iter()
            .enumerate()
            .map(|(i, x)| (x - self.coord_lo[i % dim]) / self.scale(i % dim))
            .collect()
    }

    pub fn coords_inv(&self, flat: &[f64]) -> Vec<f64> {
        let dim = self.dim();
        flat.iter()
            .enumerate()
            .map(|(i, u)| u * self.scale(i % dim) + self.coord_lo[i % dim])
            .collect()
    }

    pub fn value(&self, v: f64) -> f64 {
        (v - self.value_mean) / self.value_std
    }

    pub fn value_inv(&self, z: f64) -> f64 {
        z * self.value_std + self.value_mean
    }

    pub fn points(&self, p: &PointSet) -> PointSet {
        PointSet::new(p.dim, self.coords(&p.coords), p.values.iter().map(|&v| self.value(v)).collect())
    }

    /// Gridded inputs keep their values; only the grid geometry moves.
    pub fn grid(&self, g: &GriddedField) -> Result<GriddedField> {
        let s0 = self.scale(0);
        if (1..self.dim()).any(|d| (self.scale(d) - s0).abs() > 1e-12 * s0) {
            return Err(Error::config("gridded inputs need an isotropic coordinate normaliser"));
        }
        Ok(GriddedField {
            origin: self.coords(&g.origin),
            spacing: g.spacing / s0,
            shape: g.shape.clone(),
            values: g.values.clone(),
        })
    }

    pub fn task(&self, task: &Task) -> Result<Task> {
        if task.dim() != self.dim() {
            return Err(Error::Shape(format!(
                "task dimension {} does not match normaliser dimension {}",
                task.dim(),
                self.dim()
            )));
        }
        let aux: Vec<GriddedField> = task.aux.iter().map(|g| self.grid(g)).collect::<Result<_>>()?;
        Ok(Task {
            context: self.points(&task.context),
            targets: self.points(&task.targets),
            aux: aux.into(),
            ..task.clone()
        })
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set_list("coord_lo", &self.coord_lo.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>());
        kv.set_list("coord_hi", &self.coord_hi.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>());
        kv.set("value_mean", fmt_f64(self.value_mean));
        kv.set("value_std", fmt_f64(self.value_std));
        kv
    }

    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        Self::new(kv.get_list("coord_lo")?, kv.get_list("coord_hi")?, kv.get("value_mean")?, kv.get("value_std")?)
    }
}
