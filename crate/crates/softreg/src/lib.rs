//! Softplus regression family for nonlinear binary classification:
//! softplus, sum-softplus, stack-softplus, and sum-stack-softplus rates
//! under a Bernoulli-Poisson link, trained by an upward-downward Gibbs
//! sampler with Polya-Gamma, CRT, and truncated-Poisson augmentation.
//! Includes convex-polytope decision-boundary diagnostics, dataset
//! plumbing, and the `softreg` command-line tool.

pub mod cli;
pub mod data;
pub mod diag;
pub mod error;
pub mod geometry;
pub mod gibbs;
pub mod model;
pub mod modelfile;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
