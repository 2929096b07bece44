//! Randomized accelerated proximal dual method for linearly constrained
//! multi-block problems.

mod outer;
mod prox;
mod radual;
mod schedule;

pub use outer::{rapdual_run, rapdual_run_reformulated, schedule_for, DualMode, DualOutputRule, RapDualConfig, RapDualOutput};
pub use prox::{BlockProx, DefaultBlockProx};
pub use radual::{
    last_psi_grad, radual_solve, radual_step, stationarity_residual, BlockSelection, RaDualState, RaDualWork, IDENTITY_TOL,
    RESYNC_EVERY,
};
pub use schedule::{compute_radual_schedule, compute_radual_schedule_with, validate_radual_schedule, DualConstant, RaDualSchedule};
