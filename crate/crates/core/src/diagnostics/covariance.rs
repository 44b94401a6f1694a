use serde::{Deserialize, Serialize};

use super::{Objective, TaskObjective};
use crate::data::TaskData;
use crate::error::{invalid, Result};
use crate::model::{ModelSpec, ParamState};
use crate::rng::RngState;
use crate::tensor::{axpy, sq_norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceConfig {
    /// Number of small batches `n`.
    pub batches: usize,
    /// Small batch size `|B|`; the large batch is `|L| = n·|B|`.
    pub batch: usize,
}

impl Default for CovarianceConfig {
    fn default() -> Self {
        Self { batches: 8, batch: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceEstimate {
    /// The estimate clamped at zero.
    pub trace: f64,
    /// The unclamped estimate (unbiased, may be negative).
    pub raw: f64,
    /// Mean squared norm of the small-batch gradients.
    pub g_small: f64,
    /// Squared norm of their average.
    pub g_large: f64,
}

/// Trace of the per-example gradient covariance from `n` disjoint small
/// batches, with finite-population corrections `A_Z = (|S|−|Z|)/(|S|−1)`.
pub fn covariance_trace_of(
    obj: &impl Objective,
    cfg: &CovarianceConfig,
    rng: &mut RngState,
) -> Result<CovarianceEstimate> {
    let s = obj.len();
    let (n, b) = (cfg.batches, cfg.batch);
    let l = n * b;
    if n == 0 || b == 0 {
        return Err(invalid("covariance needs a positive batch count and size"));
    }
    if s < 2 || l > s {
        return Err(invalid(format!("covariance needs 2 <= n*|B| = {l} <= |S| = {s}")));
    }
    let fpc = |z: usize| (s - z) as f64 / (s - 1) as f64;
    let denom = fpc(b) / b as f64 - fpc(l) / l as f64;
    if denom <= 0.0 {
        return Err(invalid(format!("degenerate covariance config: A_B/|B| = A_L/|L| with n = {n}, |B| = {b}")));
    }
    let idx = rand::seq::index::sample(rng, s, l).into_vec();
    let theta = obj.point();
    let mut mean = vec![0.0; obj.dim()];
    let mut g_small = 0.0;
    for batch in idx.chunks(b) {
        let (_, g) = obj.loss_grad(&theta, batch)?;
        g_small += sq_norm(&g) / n as f64;
        axpy(1.0 / n as f64, &g, &mut mean);
    }
    let g_large = sq_norm(&mean);
    let raw = (g_small - g_large) / denom;
    Ok(CovarianceEstimate { trace: raw.max(0.0), raw, g_small, g_large })
}

/// [`covariance_trace_of`] for one task of the model, over `(θ, φ_k)`.
pub fn covariance_trace(
    params: &ParamState,
    spec: &ModelSpec,
    task: &TaskData,
    cfg: &CovarianceConfig,
    rng: &mut RngState,
) -> Result<CovarianceEstimate> {
    covariance_trace_of(&TaskObjective::new(params, spec, task)?, cfg, rng)
}
