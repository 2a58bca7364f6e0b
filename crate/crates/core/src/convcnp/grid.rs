use super::config::ModelConfig;
use crate::error::{Error, Result};

/// Regular internal grid of the ConvCNP, row-major with the last axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub origin: Vec<f64>,
    pub spacing: f64,
    pub shape: Vec<usize>,
}

impl GridSpec {
    /// `ceil(extent · ppu)` nodes per axis, where extent is the data domain plus
    /// margin on both sides, padded so every axis is divisible by `2^unet_depth`
    /// (padding split evenly between both ends).
    pub fn for_config(cfg: &ModelConfig) -> Self {
        let spacing = cfg.grid_spacing();
        let multiple = 1usize << cfg.unet_depth;
        let mut origin = Vec::new();
        let mut shape = Vec::new();
        for d in 0..cfg.input_dim {
            let length = cfg.domain_hi[d] - cfg.domain_lo[d] + 2.0 * cfg.margin;
            let raw = ((length / spacing) - 1e-9).ceil().max(1.0) as usize;
            let n = raw.div_ceil(multiple) * multiple;
            let extra = n - raw;
            origin.push(cfg.domain_lo[d] - cfg.margin - (extra / 2) as f64 * spacing);
            shape.push(n);
        }
        GridSpec { origin, spacing, shape }
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn lo(&self) -> Vec<f64> {
        self.origin.clone()
    }

    pub fn hi(&self) -> Vec<f64> {
        self.origin
            .iter()
            .zip(&self.shape)
            .map(|(o, &n)| o + (n - 1) as f64 * self.spacing)
            .collect()
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        let mut rem = flat;
        let mut out = vec![0.0; self.dim()];
        for d in (0..self.dim()).rev() {
            out[d] = self.origin[d] + (rem % self.shape[d]) as f64 * self.spacing;
            rem /= self.shape[d];
        }
        out
    }

    pub fn check_inside(&self, point: &[f64]) -> Result<()> {
        let hi = self.hi();
        let inside = point
            .iter()
            .zip(self.origin.iter().zip(&hi))
            .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi);
        if inside {
            Ok(())
        } else {
            Err(Error::Domain {
                point: point.to_vec(),
                lo: self.lo(),
                hi,
            })
        }
    }

    /// Calls `f(flat_index, squared_distance)` for every node within `radius` of `point`.
    pub fn for_nodes_near(&self, point: &[f64], radius: f64, mut f: impl FnMut(usize, f64)) {
        let dim = self.dim();
        let mut lo = [0usize; 2];
        let mut hi = [0usize; 2];
        for d in 0..dim {
            let rel = (point[d] - self.origin[d]) / self.spacing;
            let r = radius / self.spacing;
            lo[d] = (rel - r).ceil().max(0.0) as usize;
            let top = (rel + r).floor();
            if top < 0.0 {
                return;
            }
            hi[d] = (top as usize).min(self.shape[d] - 1);
            if lo[d] > hi[d] {
                return;
            }
        }
        let r2 = radius * radius;
        if dim == 1 {
            for i in lo[0]..=hi[0] {
                let dx = self.origin[0] + i as f64 * self.spacing - point[0];
                let d2 = dx * dx;
                if d2 <= r2 {
                    f(i, d2);
                }
            }
        } else {
            for i in lo[0]..=hi[0] {
                let dx = self.origin[0] + i as f64 * self.spacing - point[0];
                for j in lo[1]..=hi[1] {
                    let dy = self.origin[1] + j as f64 * self.spacing - point[1];
                    let d2 = dx * dx + dy * dy;
                    if d2 <= r2 {
                        f(i * self.shape[1] + j, d2);
                    }
                }
            }
        }
    }
}
