use serde::{Deserialize, Serialize};

use super::{truncated, Objective, TaskObjective};
use crate::data::{LossKind, TaskData};
use crate::error::{invalid, Result};
use crate::model::{ModelSpec, ParamState};
use crate::rng::RngState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FimConfig {
    pub batch: usize,
    /// Label draws `M` per input.
    pub samples: usize,
    pub truncate: usize,
    /// Allow regression tasks, which use the true target (empirical Fisher).
    pub empirical_regression: bool,
}

impl Default for FimConfig {
    fn default() -> Self {
        Self { batch: 16, samples: 8, truncate: 2048, empirical_regression: true }
    }
}

/// `E ‖∇ℓ(x, ŷ)‖²` over a truncated pool, `M` sampled labels per input.
pub fn fim_trace_of(obj: &impl Objective, cfg: &FimConfig, rng: &mut RngState) -> Result<f64> {
    if cfg.samples == 0 || cfg.batch == 0 || cfg.truncate == 0 {
        return Err(invalid("FIM batch, sample count and truncation must be positive"));
    }
    if obj.is_empty() {
        return Err(invalid("FIM trace needs at least one example"));
    }
    let theta = obj.point();
    let pool = truncated(obj.len(), cfg.truncate, rng);
    let mut total = 0.0;
    for batch in pool.chunks(cfg.batch) {
        for _ in 0..cfg.samples {
            total += obj.sampled_sq_grad_norms(&theta, batch, rng)?.iter().sum::<f64>();
        }
    }
    Ok(total / (pool.len() * cfg.samples) as f64)
}

/// [`fim_trace_of`] for one task of the model, over `(θ, φ_k)`.
pub fn fim_trace(
    params: &ParamState,
    spec: &ModelSpec,
    task: &TaskData,
    cfg: &FimConfig,
    rng: &mut RngState,
) -> Result<f64> {
    if task.loss_kind() == LossKind::SquaredError && !cfg.empirical_regression {
        return Err(invalid(format!("task `{}` is a regression task and empirical FIM is disabled", task.task_id())));
    }
    fim_trace_of(&TaskObjective::new(params, spec, task)?, cfg, rng)
}
