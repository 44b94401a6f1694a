//! Loss-surface diagnostics evaluated on immutable parameter snapshots.
//!
//! Each diagnostic is written against the [`Objective`] trait (a loss over
//! indexed examples with a flat parameter vector) so it can be checked on
//! small closed-form fixtures as well as on the model. [`TaskObjective`]
//! exposes one task of a multi-task model, with parameters `(θ, φ_k)`.

mod covariance;
mod fim;
mod objective;
mod sharpness;
mod similarity;

pub use covariance::{covariance_trace, covariance_trace_of, CovarianceConfig, CovarianceEstimate};
pub use fim::{fim_trace, fim_trace_of, FimConfig};
pub use objective::{Objective, TaskObjective};
pub use sharpness::{sharpness, sharpness_of, SharpnessConfig};
pub use similarity::{
    gradient_similarity, gradient_similarity_of, GradientSource, ModelGradientSource, SimilarityOutput,
};

use crate::rng::RngState;

/// A seeded subset of `min(limit, n)` distinct indices.
pub(crate) fn truncated(n: usize, limit: usize, rng: &mut RngState) -> Vec<usize> {
    rand::seq::index::sample(rng, n, limit.min(n)).into_vec()
}
