//! Randomized accelerated proximal methods for nonconvex finite-sum and
//! linearly constrained multi-block optimization.

pub mod baselines;
pub mod conditions;
pub mod error;
pub mod generators;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod problems;
pub mod rapdual;
pub mod rapgrad;
pub mod rng;
pub mod scad;

pub use conditions::{ConditionCheck, ValidationReport};
pub use error::{Error, Result};
pub use problems::*;
pub use rng::SeededRng;
pub use scad::ScadParams;
