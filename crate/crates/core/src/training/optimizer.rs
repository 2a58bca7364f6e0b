use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub learning_rate: f64,
}

impl OptimizerState {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        OptimizerState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            learning_rate,
        }
    }
}

/// One bias-corrected Adam update of the parameters flagged in `trainable`.
/// A non-finite gradient on a trainable parameter aborts before any change.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut OptimizerState, trainable: &[bool]) -> Result<()> {
    let n = params.len();
    if grads.len() != n || trainable.len() != n || state.m.len() != n {
        return Err(Error::Shape(format!(
            "adam_step: {n} parameters, {} gradients, {} mask entries, {} moments",
            grads.len(),
            trainable.len(),
            state.m.len()
        )));
    }
    if let Some(index) = (0..n).find(|&i| trainable[i] && !grads[i].is_finite()) {
        return Err(Error::NonFiniteGradient { index });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let lr = state.learning_rate;
    for i in 0..n {
        if !trainable[i] {
            continue;
        }
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}
