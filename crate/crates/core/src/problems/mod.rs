//! Problem containers, component oracles, feasible sets, and the
//! multi-block reformulation.

mod finite_sum;
mod multiblock;
mod oracle;
mod set;

pub use finite_sum::FiniteSumProblem;
pub use multiblock::{reformulate, BlockSpec, MultiBlockProblem, ReformulatedProblem};
pub use oracle::{
    finite_difference_gradient, gradient_error, validate_gradient, ComponentOracle, Counters, FnOracle,
    OracleStructure, QuadraticOracle, FD_REL_TOL, FD_STEP,
};
pub use set::{BoxSet, FeasibleSet};
