//! Learning a single neuron with gradient descent under adversarial label noise.
//!
//! The crate covers activation families with certified parameters, the
//! w-weighted norm, well-behaved marginals, corrupted instance generators,
//! the regularized square loss, the two gradient-descent learners, landscape
//! diagnostics and the halfspace reduction. The `neuron-landscape` binary
//! wraps all of it behind JSON configs.

pub mod activations;
pub mod distributions;
pub mod error;
pub mod halfspace;
pub mod instances;
pub mod landscape;
pub mod loss;
pub mod norms;
pub mod numeric;
pub mod optimizer;
pub mod quadrature;
pub mod rng;

pub mod cli;

pub use error::{Error, Result};
