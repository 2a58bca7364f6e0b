//! SetConv encoder (scattered points → grid with density channel) and
//! decoder (grid → arbitrary targets).

use super::grid::GridSpec;
use crate::data::{GriddedField, PointSet};
use crate::error::{Error, Result};

/// Added to the density before dividing the data channel.
pub const DENSITY_EPS: f64 = 1e-8;

/// SetConv kernels are truncated to exactly zero beyond this many lengthscales
/// (the dropped tail is below 3e−11 of the peak).
pub const KERNEL_CUTOFF: f64 = 7.0;

/// Gridded model input. Channel order: for each off-grid context set its
/// density then its density-normalised data; then each auxiliary field.
#[derive(Clone, Debug, PartialEq)]
pub struct GriddedEncoding {
    pub grid: GridSpec,
    pub n_channels: usize,
    /// `[n_channels, n_nodes]`, channel-major.
    pub channels: Vec<f64>,
}

impl GriddedEncoding {
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.grid.n_nodes();
        &self.channels[c * n..(c + 1) * n]
    }
}

pub fn encode(
    grid: &GridSpec,
    context_sets: &[&PointSet],
    aux: &[GriddedField],
    lengthscale: f64,
) -> Result<GriddedEncoding> {
    let n = grid.n_nodes();
    let n_channels = 2 * context_sets.len() + aux.len();
    let mut channels = vec![0.0; n_channels * n];
    let radius = KERNEL_CUTOFF * lengthscale;
    let inv = 1.0 / (2.0 * lengthscale * lengthscale);
    for (k, set) in context_sets.iter().enumerate() {
        if set.dim != grid.dim() {
            return Err(Error::Shape(format!("{}-D context for a {}-D grid", set.dim, grid.dim())));
        }
        let (density, data) = channels[2 * k * n..(2 * k + 2) * n].split_at_mut(n);
        for (x, &y) in set.points().zip(&set.values) {
            grid.check_inside(x)?;
            grid.for_nodes_near(x, radius, |u, d2| {
                let w = (-d2 * inv).exp();
                density[u] += w;
                data[u] += w * y;
            });
        }
        for (d, v) in density.iter().zip(data.iter_mut()) {
            *v /= d + DENSITY_EPS;
        }
    }
    let base = 2 * context_sets.len() * n;
    for (a, field) in aux.iter().enumerate() {
        if field.dim() != grid.dim() {
            return Err(Error::Shape("auxiliary field dimension differs from grid".into()));
        }
        for u in 0..n {
            channels[base + a * n + u] = field.nearest(&grid.node(u));
        }
    }
    Ok(GriddedEncoding {
        grid: grid.clone(),
        n_channels,
        channels,
    })
}

/// Interpolation weights of each target: `(node, weight / Σ weights)`.
pub(crate) struct DecodeWeights {
    pub weights: Vec<Vec<(usize, f64)>>,
}

pub(crate) fn decode_weights(grid: &GridSpec, targets: &[f64], lengthscale: f64) -> Result<DecodeWeights> {
    let dim = grid.dim();
    let radius = KERNEL_CUTOFF * lengthscale;
    let inv = 1.0 / (2.0 * lengthscale * lengthscale);
    let weights = targets
        .chunks_exact(dim)
        .map(|x| {
            grid.check_inside(x)?;
            let mut w = Vec::new();
            grid.for_nodes_near(x, radius, |u, d2| w.push((u, (-d2 * inv).exp())));
            let total: f64 = w.iter().map(|(_, v)| v).sum();
            if !(total > 0.0) {
                return Err(Error::Domain {
                    point: x.to_vec(),
                    lo: grid.lo(),
                    hi: grid.hi(),
                });
            }
            for (_, v) in &mut w {
                *v /= total;
            }
            Ok(w)
        })
        .collect::<Result<_>>()?;
    Ok(DecodeWeights { weights })
}

/// Kernel-weighted averages of the two gridded channels at each target.
pub(crate) fn decode_raw(stats: &[f64], n_nodes: usize, dw: &DecodeWeights) -> (Vec<f64>, Vec<f64>) {
    let (mean_ch, std_ch) = stats.split_at(n_nodes);
    dw.weights
        .iter()
        .map(|w| {
            w.iter().fold((0.0, 0.0), |(m, s), &(u, v)| (m + v * mean_ch[u], s + v * std_ch[u]))
        })
        .unzip()
}

pub(crate) fn decode_backward(d_mean: &[f64], d_raw_std: &[f64], n_nodes: usize, dw: &DecodeWeights) -> Vec<f64> {
    let mut d = vec![0.0; 2 * n_nodes];
    for (t, w) in dw.weights.iter().enumerate() {
        for &(u, v) in w {
            d[u] += v * d_mean[t];
            d[n_nodes + u] += v * d_raw_std[t];
        }
    }
    d
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
