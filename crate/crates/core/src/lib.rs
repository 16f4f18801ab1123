//! Meta-learned sampling priors for few-shot Bayesian optimization.
//!
//! The pipeline has two halves:
//!
//! - [`reptile`] meta-trains a small dense network ([`nn`]) over a class of
//!   random Gaussian density tasks ([`tasks`]). The trained initialization is
//!   turned into a normalized density over the search boundary by [`prior`].
//! - [`bo`] runs Gaussian-process Bayesian optimization ([`gp`]) where every
//!   acquisition candidate is drawn by Monte Carlo and weighted by that prior
//!   ([`acquisition`]), and benchmarks k-shot error against baseline priors.
//!
//! Everything that draws random numbers takes an explicit seed and derives
//! independent streams through [`rng`], so results do not depend on the
//! number of worker threads.

pub mod acquisition;
pub mod bo;
pub mod checkpoint;
pub mod error;
pub mod gp;
pub mod nn;
pub mod prior;
pub mod reptile;
pub mod rng;
pub mod tasks;

pub use error::{Error, Result};
