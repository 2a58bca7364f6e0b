use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::data::sq_dist;
use crate::error::{Error, Result};

/// Squared-exponential GP hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeKernelParams {
    pub lengthscale: f64,
    pub signal_std: f64,
    pub noise_std: f64,
}

impl SeKernelParams {
    /// Unit signal variance, which matches the normalised-data convention.
    pub fn new(lengthscale: f64, noise_std: f64) -> Result<Self> {
        let p = SeKernelParams {
            lengthscale,
            signal_std: 1.0,
            noise_std,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0) || !self.lengthscale.is_finite() {
            return Err(Error::config(format!("lengthscale must be positive, got {}", self.lengthscale)));
        }
        if !(self.signal_std > 0.0) || !self.signal_std.is_finite() {
            return Err(Error::config(format!("signal_std must be positive, got {}", self.signal_std)));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::config(format!("noise_std must be non-negative, got {}", self.noise_std)));
        }
        Ok(())
    }

    pub fn signal_var(&self) -> f64 {
        self.signal_std * self.signal_std
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_std * self.noise_std
    }
}

/// `signal_std² · exp(−‖x − x2‖² / (2ℓ²))`. Underflows to exactly 0 in the far field.
pub fn se_kernel(x: &[f64], x2: &[f64], params: &SeKernelParams) -> f64 {
    let r2 = sq_dist(x, x2);
    params.signal_var() * (-r2 / (2.0 * params.lengthscale * params.lengthscale)).exp()
}

/// Noise-free Gram matrix between two flat coordinate lists of dimension `dim`.
pub fn gram(a: &[f64], b: &[f64], dim: usize, params: &SeKernelParams) -> DMatrix<f64> {
    let (na, nb) = (a.len() / dim, b.len() / dim);
    DMatrix::from_fn(na, nb, |i, j| {
        se_kernel(&a[i * dim..(i + 1) * dim], &b[j * dim..(j + 1) * dim], params)
    })
}

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

/// Cholesky factor of `matrix + jitter·I`, escalating jitter ×10 from
/// 1e−10·scale up to 1e−4·scale. With `exact_first`, the unjittered matrix
/// is tried before the ladder. Returns the factor and the jitter used.
pub(crate) fn cholesky_with_jitter(
    matrix: &DMatrix<f64>,
    scale: f64,
    coords: &[f64],
    dim: usize,
    exact_first: bool,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = matrix.nrows();
    check_distinct(coords, dim)?;
    if exact_first {
        if let Some(chol) = Cholesky::new(matrix.clone()) {
            return Ok((chol, 0.0));
        }
    }
    let mut jitter = JITTER_START * scale;
    while jitter <= JITTER_MAX * scale * (1.0 + 1e-9) {
        let mut m = matrix.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok((chol, jitter));
        }
        jitter *= 10.0;
    }
    let (i, j, d) = closest_pair(coords, dim);
    Err(Error::DegenerateCovariance {
        i,
        j,
        detail: format!("closest pair at distance {d:e}; decomposition failed at jitter {JITTER_MAX:e}"),
    })
}

fn check_distinct(coords: &[f64], dim: usize) -> Result<()> {
    let n = coords.len() / dim;
    if n < 2 {
        return Ok(());
    }
    let (i, j, d) = closest_pair(coords, dim);
    if d == 0.0 {
        return Err(Error::DegenerateCovariance {
            i,
            j,
            detail: "coincident coordinates".to_string(),
        });
    }
    Ok(())
}

fn closest_pair(coords: &[f64], dim: usize) -> (usize, usize, f64) {
    let n = coords.len() / dim;
    let mut best = (0, 0, f64::INFINITY);
    for i in 0..n {
        for j in i + 1..n {
            let d = sq_dist(&coords[i * dim..(i + 1) * dim], &coords[j * dim..(j + 1) * dim]);
            if d < best.2 {
                best = (i, j, d);
            }
        }
    }
    (best.0, best.1, best.2.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kernel_values() {
        let p = SeKernelParams::new(0.25, 0.0).unwrap();
        assert_eq!(se_kernel(&[0.0], &[0.0], &p), 1.0);
        assert_abs_diff_eq!(se_kernel(&[0.0], &[0.25], &p), (-0.5f64).exp(), epsilon = 1e-15);
        let far = SeKernelParams::new(0.05, 0.0).unwrap();
        assert!(se_kernel(&[0.0], &[10.0], &far) < 1e-300);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(SeKernelParams::new(0.0, 0.1).is_err());
        assert!(SeKernelParams::new(0.1, -0.1).is_err());
    }

    #[test]
    fn coincident_points_name_the_pair() {
        let p = SeKernelParams::new(0.3, 0.0).unwrap();
        let coords = [0.0, 0.5, 1.0, 0.5];
        let g = gram(&coords, &coords, 1, &p);
        match cholesky_with_jitter(&g, 1.0, &coords, 1, false) {
            Err(Error::DegenerateCovariance { i, j, .. }) => assert_eq!((i, j), (1, 3)),
            other => panic!("unexpected {other:?}"),
        }
    }
}
