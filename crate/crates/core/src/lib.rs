//! A desk-scale laboratory for multi-task optimization.
//!
//! Shared-encoder networks are trained on several tasks at once with the
//! uniform multi-task gradient or one of three specialized aggregators
//! (PCGrad, MGDA, GradNorm). Each epoch the trajectory is instrumented with
//! loss-surface diagnostics (adaptive worst-case sharpness, gradient
//! covariance trace, Fisher information trace, similarity to the multi-task
//! gradient), and the resulting logs are analysed at matched training loss.
//!
//! The guide under `book/` walks through each piece; its code listings run
//! as doctests of this crate.

pub mod analysis;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod finite_diff;
pub mod harness;
pub mod layers;
pub mod model;
pub mod optim;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
pub mod book_introduction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/gradients.md")]
pub mod book_gradients {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/aggregators.md")]
pub mod book_aggregators {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/diagnostics.md")]
pub mod book_diagnostics {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/analysis.md")]
pub mod book_analysis {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod book_experiments {}
