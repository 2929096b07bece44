//! RaGrad: the randomized inner solver for
//! `min (1/m) Σ ψ_i(x) + (μ/2)‖x − z‖²` over `X`.

use std::ops::ControlFlow;

use crate::error::{ensure_dim, Result};
use crate::problems::{FeasibleSet, FiniteSumProblem};
use crate::rng::SeededRng;

use super::schedule::RaGradSchedule;

/// Iterates of RaGrad. `xunder` and `y` are stored row-major, one row of
/// length `n` per component.
#[derive(Debug, Clone, PartialEq)]
pub struct RaGradState {
    pub x_prev: Vec<f64>,
    pub x_cur: Vec<f64>,
    pub xunder: Vec<f64>,
    pub y: Vec<f64>,
    pub y_sum: Vec<f64>,
    pub center: Vec<f64>,
    pub grad_count: u64,
    n: usize,
    m: usize,
}

impl RaGradState {
    /// Starts a subproblem at `x^{-1} = x^0 = x0`. `y_sum` is summed afresh.
    pub fn new(center: Vec<f64>, x0: Vec<f64>, xunder: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = center.len();
        ensure_dim(n, x0.len())?;
        if n == 0 || xunder.len() % n != 0 {
            return Err(crate::Error::DimensionMismatch {
                expected: n,
                found: xunder.len(),
            });
        }
        let m = xunder.len() / n;
        ensure_dim(m * n, y.len())?;
        let mut state = Self {
            x_prev: x0.clone(),
            x_cur: x0,
            xunder,
            y,
            y_sum: vec![0.0; n],
            center,
            grad_count: 0,
            n,
            m,
        };
        state.refresh_sum();
        Ok(state)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn num_components(&self) -> usize {
        self.m
    }

    pub fn xunder_i(&self, i: usize) -> &[f64] {
        &self.xunder[i * self.n..(i + 1) * self.n]
    }

    pub fn y_i(&self, i: usize) -> &[f64] {
        &self.y[i * self.n..(i + 1) * self.n]
    }

    /// Recomputes `Σ_i y_i` from scratch.
    pub fn refresh_sum(&mut self) {
        self.y_sum.iter_mut().for_each(|v| *v = 0.0);
        for row in self.y.chunks(self.n) {
            for (s, v) in self.y_sum.iter_mut().zip(row) {
                *s += v;
            }
        }
    }

    /// Relative drift of the running sum against a fresh summation.
    pub fn sum_drift(&self) -> f64 {
        let mut fresh = vec![0.0; self.n];
        for row in self.y.chunks(self.n) {
            for (s, v) in fresh.iter_mut().zip(row) {
                *s += v;
            }
        }
        let diff = crate::linalg::dist_sq(&fresh, &self.y_sum).sqrt();
        diff / crate::linalg::norm(&fresh).max(1.0)
    }
}

/// Scratch buffers reused across steps.
#[derive(Debug, Clone)]
pub struct RaGradWork {
    x_tilde: Vec<f64>,
    y_new: Vec<f64>,
    x_next: Vec<f64>,
}

impl RaGradWork {
    pub fn new(n: usize) -> Self {
        Self {
            x_tilde: vec![0.0; n],
            y_new: vec![0.0; n],
            x_next: vec![0.0; n],
        }
    }
}

/// Closed form of `argmin_{x∈X} ⟨ḡ, x⟩ + (μ/2)‖x − z‖² + (ημ/2)‖x − x^{t−1}‖²`.
pub fn prox_step(center: &[f64], x_cur: &[f64], gbar: &[f64], mu: f64, eta: f64, set: &FeasibleSet, out: &mut [f64]) {
    let scale = 1.0 / (1.0 + eta);
    for j in 0..out.len() {
        out[j] = (center[j] + eta * x_cur[j] - gbar[j] / mu) * scale;
    }
    set.project_in_place(out);
}

/// One RaGrad iteration. `psi_grad(i, x, out)` writes `∇ψ_i(x)`.
pub fn ragrad_step<G>(
    state: &mut RaGradState,
    sch: &RaGradSchedule,
    psi_grad: &mut G,
    set: &FeasibleSet,
    rng: &mut SeededRng,
    work: &mut RaGradWork,
) where
    G: FnMut(usize, &[f64], &mut [f64]),
{
    let n = state.n;
    let m = state.m;
    let i = if m == 1 { 0 } else { rng.index(m) };
    let (alpha, tau, eta) = (sch.alpha, sch.tau, sch.eta);

    for j in 0..n {
        work.x_tilde[j] = state.x_cur[j] + alpha * (state.x_cur[j] - state.x_prev[j]);
    }
    let xu = &mut state.xunder[i * n..(i + 1) * n];
    let inv = 1.0 / (1.0 + tau);
    for j in 0..n {
        xu[j] = (work.x_tilde[j] + tau * xu[j]) * inv;
    }
    psi_grad(i, xu, &mut work.y_new);
    state.grad_count += 1;

    // ḡ = ySum/m + (yNew − yOld); reuse x_tilde as the buffer.
    let y_old = &mut state.y[i * n..(i + 1) * n];
    let inv_m = 1.0 / m as f64;
    if m == 1 {
        work.x_tilde.copy_from_slice(&work.y_new);
        state.y_sum.copy_from_slice(&work.y_new);
        y_old.copy_from_slice(&work.y_new);
    } else {
        for j in 0..n {
            let delta = work.y_new[j] - y_old[j];
            work.x_tilde[j] = state.y_sum[j] * inv_m + delta;
            state.y_sum[j] += delta;
            y_old[j] = work.y_new[j];
        }
    }
    prox_step(&state.center, &state.x_cur, &work.x_tilde, sch.mu, eta, set, &mut work.x_next);
    std::mem::swap(&mut state.x_prev, &mut state.x_cur);
    std::mem::swap(&mut state.x_cur, &mut work.x_next);
}

/// Runs `s` iterations, calling `observe` after each; stops early if it
/// returns `Break`. Returns the number of iterations performed.
pub fn ragrad_solve_observed<G, O>(
    state: &mut RaGradState,
    sch: &RaGradSchedule,
    s: usize,
    psi_grad: &mut G,
    set: &FeasibleSet,
    rng: &mut SeededRng,
    mut observe: O,
) -> usize
where
    G: FnMut(usize, &[f64], &mut [f64]),
    O: FnMut(&RaGradState) -> ControlFlow<()>,
{
    let mut work = RaGradWork::new(state.n);
    for t in 0..s {
        ragrad_step(state, sch, psi_grad, set, rng, &mut work);
        if observe(state).is_break() {
            return t + 1;
        }
    }
    s
}

/// Runs exactly `s` iterations.
pub fn ragrad_solve<G>(state: &mut RaGradState, sch: &RaGradSchedule, s: usize, psi_grad: &mut G, set: &FeasibleSet, rng: &mut SeededRng)
where
    G: FnMut(usize, &[f64], &mut [f64]),
{
    ragrad_solve_observed(state, sch, s, psi_grad, set, rng, |_| ControlFlow::Continue(()));
}

/// `∇ψ_i(x) = ∇f_i(x) + 2μ(x − z)` for a component of `problem`.
pub fn component_psi_grad(problem: &FiniteSumProblem, i: usize, x: &[f64], center: &[f64], mu: f64, out: &mut [f64]) {
    problem.component(i).gradient(x, out);
    add_prox_term(x, center, mu, out);
}

/// Gradient of the averaged `(1/m) Σ_i ψ_i` at `x`, costing `m` evaluations.
pub fn averaged_psi_grad(problem: &FiniteSumProblem, x: &[f64], center: &[f64], mu: f64, out: &mut [f64], scratch: &mut [f64]) {
    problem.component(0).gradient(x, out);
    for i in 1..problem.num_components() {
        problem.component(i).gradient(x, scratch);
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o += s;
        }
    }
    let inv = 1.0 / problem.num_components() as f64;
    out.iter_mut().for_each(|v| *v *= inv);
    add_prox_term(x, center, mu, out);
}

#[inline]
fn add_prox_term(x: &[f64], center: &[f64], mu: f64, out: &mut [f64]) {
    let two_mu = 2.0 * mu;
    for j in 0..out.len() {
        out[j] += two_mu * (x[j] - center[j]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rapgrad::compute_ragrad_schedule;

    #[test]
    fn prox_step_example() {
        let mut out = vec![0.0; 2];
        let mu = 0.7;
        prox_step(&[0.0, 0.0], &[1.0, 0.0], &[mu, 0.0], mu, 1.0, &FeasibleSet::WholeSpace, &mut out);
        assert!(out[0].abs() < 1e-15 && out[1].abs() < 1e-15);
    }

    #[test]
    fn prox_step_first_order_residual() {
        let mut rng = SeededRng::new(3);
        for _ in 0..50 {
            let z: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            let xc: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            let g: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            let (mu, eta) = (0.1 + rng.uniform(), 0.1 + 10.0 * rng.uniform());
            let mut x = vec![0.0; 4];
            prox_step(&z, &xc, &g, mu, eta, &FeasibleSet::WholeSpace, &mut x);
            for j in 0..4 {
                let r = g[j] + mu * (x[j] - z[j]) + eta * mu * (x[j] - xc[j]);
                assert!(r.abs() <= 1e-10);
            }
        }
    }

    fn quadratic_grad(i: usize, x: &[f64], out: &mut [f64]) {
        let w = (i + 1) as f64;
        for j in 0..x.len() {
            out[j] = w * (x[j] - 1.0);
        }
    }

    #[test]
    fn zero_momentum_on_first_step() {
        let sch = compute_ragrad_schedule(1, 2.0, 1.0).unwrap();
        let mut st = RaGradState::new(vec![0.0], vec![0.5], vec![0.5], vec![0.0]).unwrap();
        let mut seen = Vec::new();
        let mut g = |_: usize, x: &[f64], out: &mut [f64]| {
            seen.push(x[0]);
            out[0] = x[0];
        };
        let mut rng = SeededRng::new(0);
        ragrad_step(&mut st, &sch, &mut g, &FeasibleSet::WholeSpace, &mut rng, &mut RaGradWork::new(1));
        // x̃ = x⁰ and x̲ stays at 0.5 since it already equals x̃.
        assert_eq!(seen, vec![0.5]);
    }

    #[test]
    fn single_component_uses_new_gradient() {
        let sch = compute_ragrad_schedule(1, 2.0, 1.0).unwrap();
        let mut st = RaGradState::new(vec![0.0; 2], vec![0.3, -0.2], vec![0.3, -0.2], vec![9.0, 9.0]).unwrap();
        let mut rng = SeededRng::new(0);
        let mut g = quadratic_grad;
        let mut work = RaGradWork::new(2);
        ragrad_step(&mut st, &sch, &mut g, &FeasibleSet::WholeSpace, &mut rng, &mut work);
        let mut expected_g = vec![0.0; 2];
        quadratic_grad(0, &[0.3, -0.2], &mut expected_g);
        let mut expected = vec![0.0; 2];
        prox_step(&[0.0; 2], &[0.3, -0.2], &expected_g, sch.mu, sch.eta, &FeasibleSet::WholeSpace, &mut expected);
        assert_eq!(st.x_cur, expected);
    }

    #[test]
    fn running_sum_stays_exact_enough() {
        let sch = compute_ragrad_schedule(7, 20.0, 1.0).unwrap();
        let n = 3;
        let mut st = RaGradState::new(vec![0.0; n], vec![0.0; n], vec![0.0; 7 * n], vec![0.0; 7 * n]).unwrap();
        let mut rng = SeededRng::new(11);
        let mut g = quadratic_grad;
        ragrad_solve(&mut st, &sch, 5000, &mut g, &FeasibleSet::WholeSpace, &mut rng);
        assert_eq!(st.grad_count, 5000);
        assert!(st.sum_drift() <= 1e-9);
    }

    #[test]
    fn zero_steps_is_identity() {
        let sch = compute_ragrad_schedule(2, 2.0, 1.0).unwrap();
        let st0 = RaGradState::new(vec![1.0], vec![2.0], vec![3.0, 4.0], vec![5.0, 6.0]).unwrap();
        let mut st = st0.clone();
        let mut g = quadratic_grad;
        ragrad_solve(&mut st, &sch, 0, &mut g, &FeasibleSet::WholeSpace, &mut SeededRng::new(1));
        assert_eq!(st, st0);
    }
}
