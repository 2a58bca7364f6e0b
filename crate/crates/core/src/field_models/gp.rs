use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::kernel::{cholesky_with_jitter, gram, SeKernelParams};
use crate::data::PointSet;
use crate::error::Result;
use crate::rng::Rng;

/// One joint draw of a GP at a list of coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledField {
    pub dim: usize,
    pub coords: Vec<f64>,
    pub latent_values: Vec<f64>,
    pub observed_values: Vec<f64>,
}

impl SampledField {
    pub fn len(&self) -> usize {
        self.latent_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latent_values.is_empty()
    }

    pub fn observed(&self) -> PointSet {
        PointSet::new(self.dim, self.coords.clone(), self.observed_values.clone())
    }
}

/// Exact prior draw via the Cholesky factor of the (jittered) Gram matrix,
/// followed by iid observation noise. Draw order: `n` latent normals, then
/// `n` noise normals.
pub fn sample_gp_field(
    params: &SeKernelParams,
    coords: &[f64],
    dim: usize,
    rng: &mut Rng,
) -> Result<SampledField> {
    params.validate()?;
    let n = coords.len() / dim;
    let latent_values = if n == 0 {
        Vec::new()
    } else {
        let k = gram(coords, coords, dim, params);
        let (chol, _) = cholesky_with_jitter(&k, params.signal_var(), coords, dim, false)?;
        let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        (chol.l() * z).iter().copied().collect()
    };
    let observed_values = latent_values
        .iter()
        .map(|&f| {
            let eps: f64 = StandardNormal.sample(rng);
            f + params.noise_std * eps
        })
        .collect();
    Ok(SampledField {
        dim,
        coords: coords.to_vec(),
        latent_values,
        observed_values,
    })
}

/// Posterior predictive of the noisy GP.
#[derive(Clone, Debug, PartialEq)]
pub struct GpOracleResult {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Mean over targets of `log N(y_t; mean_t, std_t²)`, in nats.
    pub mean_log_density: f64,
}

/// Exact posterior predictive for observed (noisy) values at `targets`;
/// `targets.values` are used only for `mean_log_density`.
pub fn gp_posterior_oracle(
    context: &PointSet,
    targets: &PointSet,
    params: &SeKernelParams,
) -> Result<GpOracleResult> {
    let (means, stds) = gp_predict(context, &targets.coords, params)?;
    let mean_log_density = mean_log_density(&targets.values, &means, &stds);
    Ok(GpOracleResult {
        means,
        stds,
        mean_log_density,
    })
}

/// Predictive means and standard deviations at flat `target_coords`.
pub fn gp_predict(
    context: &PointSet,
    target_coords: &[f64],
    params: &SeKernelParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    params.validate()?;
    let dim = context.dim;
    let m = target_coords.len() / dim;
    let prior_var = params.signal_var() + params.noise_var();
    if context.is_empty() {
        return Ok((vec![0.0; m], vec![prior_var.sqrt(); m]));
    }
    let mut k = gram(&context.coords, &context.coords, dim, params);
    for i in 0..context.len() {
        k[(i, i)] += params.noise_var();
    }
    let (chol, _) = cholesky_with_jitter(&k, params.signal_var(), &context.coords, dim, true)?;
    let y = DVector::from_column_slice(&context.values);
    let alpha = chol.solve(&y);
    let k_star: DMatrix<f64> = gram(&context.coords, target_coords, dim, params);
    let means = (k_star.transpose() * &alpha).iter().copied().collect();
    // v = L⁻¹ k*, predictive variance = k** − ‖v‖² + σ₀².
    let v = chol
        .l()
        .solve_lower_triangular(&k_star)
        .expect("Cholesky factor has a positive diagonal");
    let stds = (0..m)
        .map(|j| {
            let explained: f64 = v.column(j).iter().map(|x| x * x).sum();
            (prior_var - explained).max(f64::MIN_POSITIVE).sqrt()
        })
        .collect();
    Ok((means, stds))
}

pub fn gaussian_log_density(y: f64, mean: f64, std: f64) -> f64 {
    let z = (y - mean) / std;
    -0.5 * (2.0 * std::f64::consts::PI).ln() - std.ln() - 0.5 * z * z
}

pub(crate) fn mean_log_density(ys: &[f64], means: &[f64], stds: &[f64]) -> f64 {
    if ys.is_empty() {
        return f64::NAN;
    }
    ys.iter()
        .zip(means)
        .zip(stds)
        .map(|((&y, &m), &s)| gaussian_log_density(y, m, s))
        .sum::<f64>()
        / ys.len() as f64
}
