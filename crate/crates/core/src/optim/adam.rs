use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self::with_betas(len, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(len: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step: 0, lr, beta1, beta2, eps }
    }
}

/// Bias-corrected Adam on the flat layout of `params`. A gradient with any
/// non-finite entry is rejected and leaves both `params` and `state` as they were.
pub fn adam_step(params: &mut ParamState, grad: &[f64], state: &mut OptimizerState) -> Result<()> {
    let n = params.len();
    if grad.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::Shape {
            context: "adam_step",
            expected: format!("{n} values"),
            actual: format!("gradient {}, moments {}/{}", grad.len(), state.m.len(), state.v.len()),
        });
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {i} is {}", grad[i])));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let mut flat = params.to_flat();
    for i in 0..n {
        let g = grad[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        flat[i] -= state.lr * mh / (vh.sqrt() + state.eps);
    }
    params.set_flat(&flat)
}
