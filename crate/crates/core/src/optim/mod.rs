//! Gradient aggregation over the shared parameters and the Adam update.

mod adam;
mod aggregate;
mod gradnorm;
mod mgda;

pub use adam::{adam_step, OptimizerState};
pub use aggregate::{aggregate_pcgrad, aggregate_umtg, head_scales, AggregatorConfig, Method, PcGradOutput};
pub use gradnorm::{aggregate_gradnorm, GradNormOutput, GRADNORM_WEIGHT_FLOOR};
pub use mgda::{aggregate_mgda, min_norm_frank_wolfe, min_norm_two, MgdaOutput};

use crate::model::{GradientBundle, ParamState};

/// Assemble a full flat gradient in [`ParamState::to_flat`] order from an
/// aggregated shared gradient and per-task head gradients scaled by `scales`.
/// Heads of tasks absent from the bundle get zero.
pub fn assemble_gradient(params: &ParamState, shared: &[f64], bundle: &GradientBundle, scales: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; params.len()];
    out[..shared.len()].copy_from_slice(shared);
    for (i, &k) in bundle.heads.iter().enumerate() {
        let off = params.head_offset(k);
        for (o, g) in out[off..off + bundle.head_grads[i].len()].iter_mut().zip(&bundle.head_grads[i]) {
            *o = scales[i] * g;
        }
    }
    out
}
