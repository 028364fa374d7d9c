//! Bayesian probabilistic numerical integration with sum-of-trees priors.
//!
//! The pipeline follows three steps: put a prior on the integrand, condition
//! on function evaluations, and push the posterior through the integration
//! functional. The tree-based route (`prior`, `sampler`, `quadrature`)
//! integrates each posterior ensemble draw exactly against product measures
//! via leaf-cell probabilities, or approximately via sample sets for
//! empirical measures. A Gaussian-process quadrature baseline (`gpbq`), a
//! plain Monte Carlo baseline, sequential design (`design`), and test
//! integrands with known ground truth (`integrands`) round out the library.

pub mod design;
pub mod error;
pub mod gpbq;
pub mod integrands;
pub mod measures;
pub mod points;
pub mod prior;
pub mod quadrature;
pub mod sampler;
pub mod seeds;
pub mod trees;

pub use error::{Error, Result};
