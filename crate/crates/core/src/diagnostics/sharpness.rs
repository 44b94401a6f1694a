use serde::{Deserialize, Serialize};

use super::{truncated, Objective, TaskObjective};
use crate::data::TaskData;
use crate::error::{invalid, Result};
use crate::model::{ModelSpec, ParamState};
use crate::rng::RngState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpnessConfig {
    pub rho: f64,
    pub batch: usize,
    /// Probe pool size; a smaller dataset is used whole.
    pub truncate: usize,
    pub steps: usize,
    /// Ascent step as a fraction of the box half-width `ρ|θ_i|`.
    pub step_fraction: f64,
}

impl Default for SharpnessConfig {
    fn default() -> Self {
        Self { rho: 1e-3, batch: 128, truncate: 2048, steps: 20, step_fraction: 0.1 }
    }
}

impl SharpnessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(invalid(format!("sharpness rho must be >= 0, got {}", self.rho)));
        }
        if self.batch == 0 || self.truncate == 0 {
            return Err(invalid("sharpness batch and truncation must be positive"));
        }
        if !(self.step_fraction > 0.0) {
            return Err(invalid("sharpness step fraction must be positive"));
        }
        Ok(())
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Worst-case adaptive ℓ∞ sharpness on batches of `obj`: the average over
/// probe batches of `max L_B(θ + ε) − L_B(θ)` for `|ε_i| ≤ ρ|θ_i|`, the max
/// taken over the iterates of projected sign ascent (including `ε = 0`).
pub fn sharpness_of(obj: &impl Objective, cfg: &SharpnessConfig, rng: &mut RngState) -> Result<f64> {
    cfg.validate()?;
    if obj.is_empty() {
        return Err(invalid("sharpness needs at least one example"));
    }
    let theta = obj.point();
    let bound: Vec<f64> = theta.iter().map(|t| cfg.rho * t.abs()).collect();
    let step: Vec<f64> = bound.iter().map(|b| b * cfg.step_fraction).collect();
    let pool = truncated(obj.len(), cfg.truncate, rng);
    let mut total = 0.0;
    let mut count = 0;
    for batch in pool.chunks(cfg.batch) {
        let (l0, mut g) = obj.loss_grad(&theta, batch)?;
        let mut best = l0;
        let mut eps = vec![0.0; theta.len()];
        let mut point = theta.clone();
        for s in 0..cfg.steps {
            for i in 0..theta.len() {
                eps[i] = (eps[i] + step[i] * sign(g[i])).clamp(-bound[i], bound[i]);
                point[i] = theta[i] + eps[i];
            }
            let l = if s + 1 < cfg.steps {
                let (l, ng) = obj.loss_grad(&point, batch)?;
                g = ng;
                l
            } else {
                obj.loss(&point, batch)?
            };
            best = best.max(l);
        }
        total += best - l0;
        count += 1;
    }
    Ok(total / count as f64)
}

/// [`sharpness_of`] for one task of the model, over `(θ, φ_k)`.
pub fn sharpness(
    params: &ParamState,
    spec: &ModelSpec,
    task: &TaskData,
    cfg: &SharpnessConfig,
    rng: &mut RngState,
) -> Result<f64> {
    sharpness_of(&TaskObjective::new(params, spec, task)?, cfg, rng)
}

#[cfg(test)]
mod tests {
    use super::super::objective::fixtures::*;
    use super::*;

    struct Linear(f64);

    impl Objective for Linear {
        fn dim(&self) -> usize {
            1
        }
        fn len(&self) -> usize {
            1
        }
        fn point(&self) -> Vec<f64> {
            vec![self.0]
        }
        fn loss(&self, p: &[f64], _: &[usize]) -> Result<f64> {
            Ok(p[0])
        }
        fn loss_grad(&self, p: &[f64], _: &[usize]) -> Result<(f64, Vec<f64>)> {
            Ok((p[0], vec![1.0]))
        }
        fn sampled_sq_grad_norms(&self, _: &[f64], _: &[usize], _: &mut RngState) -> Result<Vec<f64>> {
            Ok(vec![1.0])
        }
    }

    #[test]
    fn linear_loss_hits_the_corner() {
        let s = sharpness_of(&Linear(1.0), &SharpnessConfig::default(), &mut RngState::new(0)).unwrap();
        assert!((s - 1e-3).abs() < 1e-12, "{s}");
    }

    #[test]
    fn zero_radius_is_zero() {
        let t = toy_task(20, 3, 3, 0);
        let (spec, p) = toy_model(&t, &[4], 0);
        let cfg = SharpnessConfig { rho: 0.0, ..Default::default() };
        assert_eq!(sharpness(&p, &spec, &t, &cfg, &mut RngState::new(1)).unwrap(), 0.0);
    }

    #[test]
    fn matches_exhaustive_corner_search() {
        // 2 -> relu 2 -> 2 classes: 12 parameters, one probe batch
        let t = toy_task(16, 2, 2, 3);
        let (spec, p) = toy_model(&t, &[2], 7);
        let obj = TaskObjective::new(&p, &spec, &t).unwrap();
        assert_eq!(obj.dim(), 12);
        let cfg = SharpnessConfig::default();
        let got = sharpness_of(&obj, &cfg, &mut RngState::new(5)).unwrap();
        let theta = obj.point();
        let all: Vec<usize> = (0..16).collect();
        let l0 = obj.loss(&theta, &all).unwrap();
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..1 << 12 {
            let point: Vec<f64> = theta
                .iter()
                .enumerate()
                .map(|(i, t)| t + if mask >> i & 1 == 1 { 1.0 } else { -1.0 } * cfg.rho * t.abs())
                .collect();
            best = best.max(obj.loss(&point, &all).unwrap() - l0);
        }
        assert!(best > 0.0);
        assert!((got - best).abs() <= 0.05 * best, "{got} vs {best}");
    }

    #[test]
    fn never_negative_and_pure() {
        let t = toy_task(300, 4, 3, 9);
        let (spec, p) = toy_model(&t, &[6], 9);
        let before = p.clone();
        let cfg = SharpnessConfig { batch: 64, truncate: 200, ..Default::default() };
        let s = sharpness(&p, &spec, &t, &cfg, &mut RngState::new(2)).unwrap();
        assert!(s >= 0.0);
        assert_eq!(p, before);
        let q = Quadratic { centers: vec![vec![1.0, -1.0]; 4], at: vec![0.5, 0.25] };
        assert!(sharpness_of(&q, &cfg, &mut RngState::new(0)).unwrap() > 0.0);
    }
}
