use rayon::prelude::*;

use super::config::ModelConfig;
use super::grid::GridSpec;
use super::params::ParameterSet;
use super::setconv::{self, decode_backward, decode_raw, decode_weights, sigmoid, softplus, GriddedEncoding};
use super::unet::{UNet, OUT_CHANNELS};
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::taskgen::Task;

/// Independent Gaussian predictive per target point.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPrediction {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl GaussianPrediction {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Mean over targets of `−log N(y; μ, σ²)`.
pub fn nll_loss(prediction: &GaussianPrediction, y: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::EmptyTargets);
    }
    if y.len() != prediction.len() {
        return Err(Error::Shape(format!("{} predictions for {} targets", prediction.len(), y.len())));
    }
    let total: f64 = y
        .iter()
        .zip(prediction.means.iter().zip(&prediction.stds))
        .map(|(&y, (&m, &s))| HALF_LN_2PI + s.ln() + (y - m) * (y - m) / (2.0 * s * s))
        .sum();
    Ok(total / y.len() as f64)
}

/// A convolutional conditional neural process operating in model coordinates.
#[derive(Clone, Debug)]
pub struct ConvCnp {
    config: ModelConfig,
    grid: GridSpec,
    net: UNet,
    params: ParameterSet,
}

impl ConvCnp {
    /// Freshly initialised model (fan-in uniform weights, identity FiLM).
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut model = Self::uninitialised(config)?;
        model.net.init_params(&mut model.params, &mut seeded(seed));
        Ok(model)
    }

    /// Layout only; every weight zero, FiLM at identity.
    pub fn uninitialised(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let grid = GridSpec::for_config(&config);
        let (net, params) = UNet::new(&config, &grid.shape);
        Ok(ConvCnp {
            config,
            grid,
            net,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn reset_film(&mut self) {
        self.net.reset_film(&mut self.params);
    }

    /// Backbone receptive-field radius in full-resolution grid nodes.
    pub fn receptive_field_nodes(&self) -> usize {
        self.net.receptive_field_radius(self.config.kernel_size)
    }

    /// Distance beyond which a context point cannot affect a target prediction.
    pub fn influence_radius(&self) -> f64 {
        setconv::KERNEL_CUTOFF * (self.config.encoder_lengthscale + self.config.decoder_lengthscale)
            + self.receptive_field_nodes() as f64 * self.grid.spacing
    }

    pub fn encode(&self, task: &Task) -> Result<GriddedEncoding> {
        if task.aux.len() != self.config.n_aux_channels {
            return Err(Error::Shape(format!(
                "model expects {} auxiliary fields, task has {}",
                self.config.n_aux_channels,
                task.aux.len()
            )));
        }
        setconv::encode(&self.grid, &[&task.context], &task.aux, self.config.encoder_lengthscale)
    }

    /// Gridded `[raw mean, raw pre-std]` channels.
    pub fn backbone_forward(&self, encoding: &GriddedEncoding) -> Result<Vec<f64>> {
        self.check_encoding(encoding)?;
        Ok(self.net.forward(&self.params, &encoding.channels).0)
    }

    pub fn decode(&self, stats: &[f64], targets: &[f64]) -> Result<GaussianPrediction> {
        let n = self.grid.n_nodes();
        if stats.len() != OUT_CHANNELS * n {
            return Err(Error::Shape("gridded stats must have two channels".into()));
        }
        let dw = decode_weights(&self.grid, targets, self.config.decoder_lengthscale)?;
        let (means, raw) = decode_raw(stats, n, &dw);
        let stds = raw.iter().map(|&r| self.config.min_sigma + softplus(r)).collect();
        Ok(GaussianPrediction { means, stds })
    }

    pub fn predict(&self, task: &Task) -> Result<GaussianPrediction> {
        let enc = self.encode(task)?;
        let stats = self.backbone_forward(&enc)?;
        self.decode(&stats, &task.targets.coords)
    }

    /// Per-point NLL of one task and its gradient w.r.t. every parameter.
    pub fn task_loss_and_grad(&self, task: &Task) -> Result<(f64, Vec<f64>)> {
        let m = task.targets.len();
        if m == 0 {
            return Err(Error::EmptyTargets);
        }
        let enc = self.encode(task)?;
        self.check_encoding(&enc)?;
        let (stats, cache) = self.net.forward(&self.params, &enc.channels);
        let n = self.grid.n_nodes();
        let dw = decode_weights(&self.grid, &task.targets.coords, self.config.decoder_lengthscale)?;
        let (means, raw) = decode_raw(&stats, n, &dw);
        let mut loss = 0.0;
        let mut d_mean = Vec::with_capacity(m);
        let mut d_raw = Vec::with_capacity(m);
        let scale = 1.0 / m as f64;
        for t in 0..m {
            let s = self.config.min_sigma + softplus(raw[t]);
            let r = task.targets.values[t] - means[t];
            loss += HALF_LN_2PI + s.ln() + r * r / (2.0 * s * s);
            d_mean.push(-r / (s * s) * scale);
            let d_sigma = (1.0 / s - r * r / (s * s * s)) * scale;
            d_raw.push(d_sigma * sigmoid(raw[t]));
        }
        let d_stats = decode_backward(&d_mean, &d_raw, n, &dw);
        let mut grad = vec![0.0; self.params.len()];
        self.net.backward(&self.params, &cache, &d_stats, &mut grad);
        Ok((loss * scale, grad))
    }

    /// Batch-mean NLL and its gradient. Per-task work may run in parallel;
    /// the reduction is always in batch order.
    pub fn param_gradients(&self, batch: &[Task]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let parts: Vec<Result<(f64, Vec<f64>)>> = batch.par_iter().map(|t| self.task_loss_and_grad(t)).collect();
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.params.len()];
        for (i, part) in parts.into_iter().enumerate() {
            let (l, g) = part?;
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss { task_index: i });
            }
            loss += l * scale;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b * scale;
            }
        }
        Ok((loss, grad))
    }

    fn check_encoding(&self, enc: &GriddedEncoding) -> Result<()> {
        if enc.grid.shape != self.grid.shape || enc.n_channels != self.net.n_in {
            return Err(Error::Shape(format!(
                "encoding {:?}×{} does not match model grid {:?}×{}",
                enc.grid.shape, enc.n_channels, self.grid.shape, self.net.n_in
            )));
        }
        Ok(())
    }
}
