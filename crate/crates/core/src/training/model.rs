use std::path::Path;

use rayon::prelude::*;

use super::normalizer::Normalizer;
use crate::convcnp::{checkpoint, ConvCnp, GaussianPrediction};
use crate::error::{Error, Result};
use crate::field_models::{gp_predict, SeKernelParams};
use crate::kv::KvFile;
use crate::taskgen::Task;

/// Anything that maps a raw-unit task to a raw-unit Gaussian prediction.
pub trait Predictor: Sync {
    fn predict(&self, task: &Task) -> Result<GaussianPrediction>;
}

/// A ConvCNP together with the normalisation it was trained under.
#[derive(Clone, Debug)]
pub struct Sim2RealModel {
    pub net: ConvCnp,
    pub normalizer: Normalizer,
}

impl Sim2RealModel {
    pub fn new(net: ConvCnp, normalizer: Normalizer) -> Result<Self> {
        if net.config().input_dim != normalizer.dim() {
            return Err(Error::config(format!(
                "model is {}D but the normaliser is {}D",
                net.config().input_dim,
                normalizer.dim()
            )));
        }
        Ok(Sim2RealModel { net, normalizer })
    }

    /// Raw-unit data domain covered by the model.
    pub fn data_domain(&self) -> (Vec<f64>, Vec<f64>) {
        let cfg = self.net.config();
        (self.normalizer.coords_inv(&cfg.domain_lo), self.normalizer.coords_inv(&cfg.domain_hi))
    }

    pub fn save(&self, path: &Path, extra: &KvFile) -> Result<()> {
        let mut meta = extra.clone();
        meta.merge_section("normalizer", &self.normalizer.to_kv());
        checkpoint::save(path, &self.net, &meta)
    }

    /// Returns the model and the metadata saved alongside it.
    pub fn load(path: &Path) -> Result<(Self, KvFile)> {
        let (net, meta) = checkpoint::load(path)?;
        let normalizer = Normalizer::from_kv(&meta.section("normalizer"))?;
        Ok((Self::new(net, normalizer)?, meta))
    }
}

impl Predictor for Sim2RealModel {
    fn predict(&self, task: &Task) -> Result<GaussianPrediction> {
        let p = self.net.predict(&self.normalizer.task(task)?)?;
        let s = self.normalizer.value_std;
        Ok(GaussianPrediction {
            means: p.means.iter().map(|&m| self.normalizer.value_inv(m)).collect(),
            stds: p.stds.iter().map(|&x| x * s).collect(),
        })
    }
}

/// The exact GP posterior predictive for tasks drawn from `params`.
#[derive(Clone, Debug)]
pub struct GpOracle {
    pub params: SeKernelParams,
}

impl Predictor for GpOracle {
    fn predict(&self, task: &Task) -> Result<GaussianPrediction> {
        let (means, stds) = gp_predict(&task.context, &task.targets.coords, &self.params)?;
        Ok(GaussianPrediction { means, stds })
    }
}

/// Task-mean of per-point NLL and MAE.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub nll: f64,
    pub mae: f64,
}

/// Scores `predictor` on `tasks` in raw units. Tasks run in parallel and are
/// reduced in input order.
pub fn evaluate(predictor: &dyn Predictor, tasks: &[Task]) -> Result<Evaluation> {
    if tasks.is_empty() {
        return Err(Error::config("evaluation needs at least one task"));
    }
    let per_task: Vec<Result<(f64, f64)>> = tasks
        .par_iter()
        .map(|t| {
            let p = predictor.predict(t)?;
            let nll = crate::convcnp::nll_loss(&p, &t.targets.values)?;
            let mae = t.targets.values.iter().zip(&p.means).map(|(y, m)| (y - m).abs()).sum::<f64>()
                / t.targets.len() as f64;
            Ok((nll, mae))
        })
        .collect();
    let (mut nll, mut mae) = (0.0, 0.0);
    for r in per_task {
        let (a, b) = r?;
        nll += a;
        mae += b;
    }
    let n = tasks.len() as f64;
    Ok(Evaluation {
        nll: nll / n,
        mae: mae / n,
    })
}
