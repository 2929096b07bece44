//! RaDual: the randomized primal-dual inner solver for
//! `min ψ(x) + ψ_m(x_m)` subject to `𝐀x + x_m = 𝐛`.

use crate::error::{ensure_dim, Error, Result};
use crate::linalg;
use crate::problems::ReformulatedProblem;
use crate::rng::SeededRng;

use super::prox::BlockProx;
use super::schedule::RaDualSchedule;

/// Steps between from-scratch checks of the maintained `𝐀x`.
pub const RESYNC_EVERY: u64 = 1000;
/// Relative tolerance of the `𝐀x` check and the final stationarity check.
pub const IDENTITY_TOL: f64 = 1e-9;

/// Which blocks an iteration updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockSelection {
    /// One block drawn uniformly from `[m − 1]`.
    Random,
    /// Every block, each with the same dual iterate.
    All,
}

/// Iterates of RaDual. `x` is the stacked primal vector; `x^{t−2}` enters
/// only through `𝐀x^{t−2}`, which is what is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct RaDualState {
    pub x: Vec<f64>,
    pub ax_cur: Vec<f64>,
    pub ax_prev: Vec<f64>,
    pub g: Vec<f64>,
    /// Undefined (zero) until the first iteration.
    pub y: Vec<f64>,
    pub centers: Vec<f64>,
    pub center_m: Vec<f64>,
    pub steps: u64,
    pub block_updates: u64,
}

impl RaDualState {
    /// `x^{−1} = x^0 = x0`, `g^0 = −x_m^0`; proximal centers default to the
    /// starting point as in the outer loop.
    pub fn new(rp: &ReformulatedProblem, x0: Vec<f64>, xm0: &[f64], centers: Vec<f64>, center_m: Vec<f64>) -> Result<Self> {
        ensure_dim(rp.total_dim(), x0.len())?;
        ensure_dim(rp.total_dim(), centers.len())?;
        let n = rp.constraint_rows();
        ensure_dim(n, xm0.len())?;
        ensure_dim(n, center_m.len())?;
        let mut ax = vec![0.0; n];
        rp.apply(&x0, &mut ax);
        Ok(Self {
            x: x0,
            ax_prev: ax.clone(),
            ax_cur: ax,
            g: xm0.iter().map(|v| -v).collect(),
            y: vec![0.0; n],
            centers,
            center_m,
            steps: 0,
            block_updates: 0,
        })
    }

    /// `x_m = −g`, the last-block iterate implied by the dual step.
    pub fn xm(&self) -> Vec<f64> {
        self.g.iter().map(|v| -v).collect()
    }
}

/// Scratch space for [`radual_step`].
#[derive(Debug, Clone)]
pub struct RaDualWork {
    neg_g: Vec<f64>,
    grad_m: Vec<f64>,
    lin: Vec<f64>,
    center: Vec<f64>,
    block: Vec<f64>,
    delta: Vec<f64>,
    fresh: Vec<f64>,
}

impl RaDualWork {
    pub fn new(rp: &ReformulatedProblem) -> Self {
        let n = rp.constraint_rows();
        let d = (0..rp.num_primal_blocks()).map(|i| rp.block_range(i).len()).max().unwrap_or(0);
        Self {
            neg_g: vec![0.0; n],
            grad_m: vec![0.0; n],
            lin: vec![0.0; d],
            center: vec![0.0; d],
            block: vec![0.0; d],
            delta: vec![0.0; d],
            fresh: vec![0.0; n],
        }
    }
}

/// `∇ψ_m(x) = ∇f_m(x) + 2μ(x − x̄_m)`.
pub fn last_psi_grad(rp: &ReformulatedProblem, x: &[f64], center_m: &[f64], mu: f64, out: &mut [f64]) {
    rp.last_oracle().gradient(x, out);
    for j in 0..out.len() {
        out[j] += 2.0 * mu * (x[j] - center_m[j]);
    }
}

fn update_block(
    rp: &ReformulatedProblem,
    state: &mut RaDualState,
    i: usize,
    sch: &RaDualSchedule,
    prox: &dyn BlockProx,
    work: &mut RaDualWork,
) -> Result<()> {
    let r = rp.block_range(i);
    let d = r.len();
    let mu = sch.mu;
    let q = 2.0 * mu + sch.eta;
    let lin = &mut work.lin[..d];
    linalg::mat_t_vec(rp.coupling(i), &state.y, lin);
    let center = &mut work.center[..d];
    let block = &mut work.block[..d];
    for (k, j) in r.clone().enumerate() {
        center[k] = (2.0 * mu * state.centers[j] + sch.eta * state.x[j]) / q;
        block[k] = state.x[j];
    }
    prox.prox(rp.block_oracle(i), rp.block_set(i), lin, q, center, block)?;
    let delta = &mut work.delta[..d];
    for (k, j) in r.enumerate() {
        delta[k] = block[k] - state.x[j];
        state.x[j] = block[k];
    }
    linalg::mat_vec_acc(rp.coupling(i), delta, &mut state.ax_cur);
    state.block_updates += 1;
    Ok(())
}

/// One RaDual iteration.
pub fn radual_step(
    rp: &ReformulatedProblem,
    state: &mut RaDualState,
    sch: &RaDualSchedule,
    prox: &dyn BlockProx,
    selection: BlockSelection,
    rng: &mut SeededRng,
    work: &mut RaDualWork,
) -> Result<()> {
    let n = rp.constraint_rows();
    let b = rp.rhs();
    let (at, tau) = (sch.alpha_t, sch.tau);
    let inv = 1.0 / (1.0 + tau);
    for j in 0..n {
        let ax_tilde = state.ax_cur[j] + at * (state.ax_cur[j] - state.ax_prev[j]);
        state.g[j] = (tau * state.g[j] + ax_tilde - b[j]) * inv;
        work.neg_g[j] = -state.g[j];
    }
    last_psi_grad(rp, &work.neg_g, &state.center_m, sch.mu, &mut work.grad_m);
    for j in 0..n {
        state.y[j] = -work.grad_m[j];
    }
    state.ax_prev.copy_from_slice(&state.ax_cur);
    match selection {
        BlockSelection::Random => {
            let blocks = rp.num_primal_blocks();
            let i = if blocks == 1 { 0 } else { rng.index(blocks) };
            update_block(rp, state, i, sch, prox, work)?;
        }
        BlockSelection::All => {
            for i in 0..rp.num_primal_blocks() {
                update_block(rp, state, i, sch, prox, work)?;
            }
        }
    }
    state.steps += 1;
    if state.steps % RESYNC_EVERY == 0 {
        resync(rp, state, work)?;
    }
    Ok(())
}

/// Recomputes `𝐀x` from scratch, fails if the maintained value drifted.
fn resync(rp: &ReformulatedProblem, state: &mut RaDualState, work: &mut RaDualWork) -> Result<()> {
    rp.apply(&state.x, &mut work.fresh);
    let drift = linalg::dist_sq(&work.fresh, &state.ax_cur).sqrt();
    let scale = linalg::norm(&work.fresh).max(1.0);
    if drift > IDENTITY_TOL * scale {
        return Err(Error::InvariantViolation(format!(
            "maintained 𝐀x drifted by {:e} relative",
            drift / scale
        )));
    }
    state.ax_cur.copy_from_slice(&work.fresh);
    Ok(())
}

/// `‖∇ψ_m(x_m) + y‖ / (1 + ‖y‖)` at `x_m = −g`.
pub fn stationarity_residual(rp: &ReformulatedProblem, state: &RaDualState, mu: f64) -> f64 {
    let xm = state.xm();
    let mut gm = vec![0.0; xm.len()];
    last_psi_grad(rp, &xm, &state.center_m, mu, &mut gm);
    let r: f64 = gm.iter().zip(&state.y).map(|(a, b)| (a + b) * (a + b)).sum();
    r.sqrt() / (1.0 + linalg::norm(&state.y))
}

/// Runs `s` iterations and returns `x_m^s = −g^s`, after checking that it
/// satisfies the stationarity condition of the final argmin.
pub fn radual_solve(
    rp: &ReformulatedProblem,
    state: &mut RaDualState,
    sch: &RaDualSchedule,
    s: usize,
    prox: &dyn BlockProx,
    selection: BlockSelection,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    let mut work = RaDualWork::new(rp);
    for _ in 0..s {
        radual_step(rp, state, sch, prox, selection, rng, &mut work)?;
    }
    finish(rp, state, sch.mu)
}

pub(crate) fn finish(rp: &ReformulatedProblem, state: &RaDualState, mu: f64) -> Result<Vec<f64>> {
    if state.steps > 0 {
        let r = stationarity_residual(rp, state, mu);
        if r > IDENTITY_TOL {
            return Err(Error::InvariantViolation(format!("x_m stationarity residual {r:e}")));
        }
    }
    Ok(state.xm())
}
