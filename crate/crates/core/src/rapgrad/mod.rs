//! Randomized accelerated proximal gradient for nonconvex finite sums.

mod outer;
mod ragrad;
pub(crate) mod schedule;

pub use outer::{rapgrad_run, Mode, OutputRule, RapGradConfig, RapGradOutput, INVARIANT_TOL};
pub use ragrad::{
    averaged_psi_grad, component_psi_grad, prox_step, ragrad_solve, ragrad_solve_observed, ragrad_step, RaGradState, RaGradWork,
};
pub use schedule::{compute_ragrad_schedule, compute_ragrad_schedule_with, validate_ragrad_schedule, InnerConstant, RaGradSchedule};
