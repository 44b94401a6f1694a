use crate::error::{invalid, Result};
use crate::model::GradientBundle;
use crate::tensor::{axpy, sq_norm};

/// Learned weights never drop below this before renormalization.
pub const GRADNORM_WEIGHT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradNormOutput {
    /// `Σ_k w̃_k g_k` with the weights before this step's update.
    pub gradient: Vec<f64>,
    /// Updated weights, summing to `K`.
    pub weights: Vec<f64>,
    /// Tasks left out of the loss-ratio mean because `L_k(0) = 0`.
    pub excluded: Vec<usize>,
}

/// One GradNorm step: combine with the current weights, then take one
/// gradient step on `Σ_k |w_k‖g_k‖ − Ḡ r_k^α|` with the targets held fixed.
pub fn aggregate_gradnorm(
    bundle: &GradientBundle,
    losses: &[f64],
    initial_losses: &[f64],
    weights: &[f64],
    alpha: f64,
    lr: f64,
) -> Result<GradNormOutput> {
    let k = bundle.len();
    if k == 0 {
        return Err(invalid("cannot aggregate an empty gradient bundle"));
    }
    if losses.len() != k || initial_losses.len() != k || weights.len() != k {
        return Err(invalid(format!(
            "gradnorm needs {k} losses, initial losses and weights; got {}, {}, {}",
            losses.len(),
            initial_losses.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(invalid("gradnorm weights must be positive"));
    }
    let mut gradient = vec![0.0; bundle.dim()];
    for (g, &w) in bundle.shared.iter().zip(weights) {
        axpy(w, g, &mut gradient);
    }
    let norms: Vec<f64> = bundle.shared.iter().map(|g| sq_norm(g).sqrt()).collect();
    let excluded: Vec<usize> = (0..k).filter(|&i| initial_losses[i] == 0.0).collect();
    let ratio = |i: usize| losses[i] / initial_losses[i];
    let active: Vec<usize> = (0..k).filter(|i| !excluded.contains(i)).collect();
    let mean_ratio = if active.is_empty() {
        1.0
    } else {
        active.iter().map(|&i| ratio(i)).sum::<f64>() / active.len() as f64
    };
    let r: Vec<f64> = (0..k)
        .map(|i| {
            if excluded.contains(&i) || mean_ratio == 0.0 {
                1.0
            } else {
                ratio(i) / mean_ratio
            }
        })
        .collect();
    let weighted: Vec<f64> = (0..k).map(|i| weights[i] * norms[i]).collect();
    let g_bar = weighted.iter().sum::<f64>() / k as f64;
    let mut next: Vec<f64> = (0..k)
        .map(|i| {
            let diff = weighted[i] - g_bar * r[i].powf(alpha);
            let sign = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            (weights[i] - lr * sign * norms[i]).max(GRADNORM_WEIGHT_FLOOR)
        })
        .collect();
    let total: f64 = next.iter().sum();
    next.iter_mut().for_each(|w| *w *= k as f64 / total);
    Ok(GradNormOutput { gradient, weights: next, excluded })
}
