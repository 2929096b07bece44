//! Smoothed SCAD penalty, the SCAD-penalized least-squares family, and the
//! scalar proximal solver used by block updates.
//!
//! The smoothed penalty replaces `|x|` by `r = (x² + ε)^{1/2}`:
//!
//! ```text
//! p(x) = λ r                                   r ≤ λ
//!      = (2γλ r − r² − λ²) / (2(γ − 1))        λ < r < γλ
//!      = λ²(γ + 1) / 2                         r ≥ γλ
//! ```
//!
//! `p` is C¹ with `|p'| ≤ λ`, `p'' ≤ λ/√ε` and `p'' ≥ −1/(γ − 1)`, which is
//! where the constants reported by [`build_scad_ls`] come from.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::linalg;
use crate::problems::{ComponentOracle, FeasibleSet, FiniteSumProblem, OracleStructure};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScadParams {
    pub lambda: f64,
    pub gamma: f64,
    pub eps: f64,
    /// Penalty weight; the penalty term is `(ρ/2) Σ_j p(x_j)`.
    pub rho: f64,
}

impl Default for ScadParams {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            gamma: 4.0,
            eps: 1e-3,
            rho: 0.01,
        }
    }
}

impl ScadParams {
    pub fn new(lambda: f64, gamma: f64, eps: f64, rho: f64) -> Result<Self> {
        let p = Self { lambda, gamma, eps, rho };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("SCAD λ must be positive, got {}", self.lambda)));
        }
        if !(self.gamma > 2.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("SCAD γ must exceed 2, got {}", self.gamma)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("SCAD ε must be positive, got {}", self.eps)));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("SCAD weight ρ must be non-negative, got {}", self.rho)));
        }
        Ok(())
    }

    /// Lower curvature of `(ρ/2)p`: `ρ / (2(γ − 1))`.
    pub fn weak_convexity(&self) -> f64 {
        self.rho / (2.0 * (self.gamma - 1.0))
    }

    /// Gradient Lipschitz constant of `(ρ/2)p`: `ρλ ε^{-1/2} / 2`.
    pub fn smoothness(&self) -> f64 {
        self.rho * self.lambda / self.eps.sqrt() / 2.0
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Branch {
    Linear,
    Quadratic,
    Flat,
}

pub(crate) fn branch(r: f64, p: &ScadParams) -> Branch {
    if r <= p.lambda {
        Branch::Linear
    } else if r < p.gamma * p.lambda {
        Branch::Quadratic
    } else {
        Branch::Flat
    }
}

/// Penalty as a function of the smoothed radius, on an explicit branch.
pub(crate) fn value_on_branch(r: f64, b: Branch, p: &ScadParams) -> f64 {
    let (l, g) = (p.lambda, p.gamma);
    match b {
        Branch::Linear => l * r,
        Branch::Quadratic => (2.0 * g * l * r - r * r - l * l) / (2.0 * (g - 1.0)),
        Branch::Flat => l * l * (g + 1.0) / 2.0,
    }
}

/// Derivative of the radial profile on an explicit branch.
pub(crate) fn radial_slope_on_branch(r: f64, b: Branch, p: &ScadParams) -> f64 {
    match b {
        Branch::Linear => p.lambda,
        Branch::Quadratic => (p.gamma * p.lambda - r) / (p.gamma - 1.0),
        Branch::Flat => 0.0,
    }
}

#[inline]
fn radius(x: f64, p: &ScadParams) -> f64 {
    (x * x + p.eps).sqrt()
}

/// `p_{λ,γ,ε}(x)`
pub fn scad_value(x: f64, p: &ScadParams) -> f64 {
    let r = radius(x, p);
    value_on_branch(r, branch(r, p), p)
}

/// `p'_{λ,γ,ε}(x)`
pub fn scad_grad(x: f64, p: &ScadParams) -> f64 {
    let r = radius(x, p);
    radial_slope_on_branch(r, branch(r, p), p) * x / r
}

/// `p''_{λ,γ,ε}(x)` away from the two seams (one-sided there).
pub fn scad_second(x: f64, p: &ScadParams) -> f64 {
    let r = radius(x, p);
    let r3 = r * r * r;
    match branch(r, p) {
        Branch::Linear => p.lambda * p.eps / r3,
        Branch::Quadratic => {
            let slope = (p.gamma * p.lambda - r) / (p.gamma - 1.0);
            -(x * x) / (r * r) / (p.gamma - 1.0) + slope * p.eps / r3
        }
        Branch::Flat => 0.0,
    }
}

/// Row data shared by all components of a SCAD least-squares instance.
#[derive(Debug)]
pub struct LeastSquaresData {
    rows: Vec<f64>,
    rhs: Vec<f64>,
    n: usize,
    params: ScadParams,
}

impl LeastSquaresData {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.n..(i + 1) * self.n]
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn params(&self) -> &ScadParams {
        &self.params
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn num_cols(&self) -> usize {
        self.n
    }
}

/// `f_i(x) = ½(a_iᵀx − b_i)² + (ρ/2) Σ_j p(x_j)`
#[derive(Debug, Clone)]
pub struct ScadLeastSquaresComponent {
    data: Arc<LeastSquaresData>,
    index: usize,
}

impl ComponentOracle for ScadLeastSquaresComponent {
    fn dim(&self) -> usize {
        self.data.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        let a = self.data.row(self.index);
        let res = linalg::dot(a, x) - self.data.rhs[self.index];
        0.5 * res * res + separable_value(x, &self.data.params)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let a = self.data.row(self.index);
        let res = linalg::dot(a, x) - self.data.rhs[self.index];
        let half_rho = 0.5 * self.data.params.rho;
        for ((o, &aj), &xj) in out.iter_mut().zip(a).zip(x) {
            *o = res * aj + half_rho * scad_grad(xj, &self.data.params);
        }
    }
}

fn separable_value(x: &[f64], p: &ScadParams) -> f64 {
    0.5 * p.rho * x.iter().map(|&v| scad_value(v, p)).sum::<f64>()
}

/// `(ρ/2) Σ_j p(x_j)` on `R^d`.
#[derive(Debug, Clone)]
pub struct SeparableScadOracle {
    dim: usize,
    params: ScadParams,
}

impl SeparableScadOracle {
    pub fn new(dim: usize, params: ScadParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { dim, params })
    }

    pub fn params(&self) -> &ScadParams {
        &self.params
    }
}

impl ComponentOracle for SeparableScadOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        separable_value(x, &self.params)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let half_rho = 0.5 * self.params.rho;
        for (o, &v) in out.iter_mut().zip(x) {
            *o = half_rho * scad_grad(v, &self.params);
        }
    }

    fn structure(&self) -> OracleStructure<'_> {
        OracleStructure::SeparableScad(self.params)
    }
}

/// SCAD-penalized least squares `(1/2m)‖Ax − b‖² + (ρ/2) Σ_j p(x_j)` as a
/// finite sum over the rows of `A` (row-major, `m × n`).
///
/// `μ = ρ/(2(γ−1))` and `L = ρλε^{−1/2}/2 + max_i ‖a_i‖²`.
pub fn build_scad_ls(rows: Vec<f64>, m: usize, n: usize, rhs: Vec<f64>, params: ScadParams) -> Result<FiniteSumProblem> {
    params.validate()?;
    ensure_dim(m * n, rows.len())?;
    ensure_dim(m, rhs.len())?;
    crate::error::ensure_finite(&rows, "matrix")?;
    crate::error::ensure_finite(&rhs, "right-hand side")?;
    if params.rho == 0.0 {
        return Err(Error::InvalidParameter(
            "SCAD weight ρ = 0 gives lower curvature μ = 0; set ρ > 0".into(),
        ));
    }
    let max_row_sq = rows
        .chunks(n.max(1))
        .map(linalg::norm_sq)
        .fold(0.0, f64::max);
    let mu = params.weak_convexity();
    let lipschitz = (params.smoothness() + max_row_sq).max(mu);
    let data = Arc::new(LeastSquaresData { rows, rhs, n, params });
    let components = (0..m)
        .map(|index| {
            Arc::new(ScadLeastSquaresComponent {
                data: Arc::clone(&data),
                index,
            }) as Arc<dyn ComponentOracle>
        })
        .collect();
    FiniteSumProblem::new(components, FeasibleSet::WholeSpace, lipschitz, mu)
}

pub const PROX_DEFAULT_TOL: f64 = 1e-12;
pub const PROX_MAX_ITER: usize = 100;

/// Minimizer of `q(x) = (ρ/2)p(x) + lin·x + (quad/2)(x − center)²`.
///
/// Safeguarded Newton on `q'` inside a bracket; a Newton step that leaves the
/// bracket is replaced by bisection. Returns `x*` with
/// `|q'(x*)| ≤ tol·(1 + |x*|)`, or the midpoint once the bracket has shrunk to
/// floating-point resolution.
pub fn scad_scalar_prox(lin: f64, quad: f64, center: f64, p: &ScadParams, tol: f64) -> Result<f64> {
    let kappa = p.weak_convexity();
    if !(quad > kappa) {
        return Err(Error::NotStronglyConvex(format!(
            "quadratic coefficient {quad} must exceed ρ/(2(γ−1)) = {kappa}"
        )));
    }
    if !(lin.is_finite() && center.is_finite() && quad.is_finite()) {
        return Err(Error::NonFinite("scalar prox input"));
    }
    let half_rho = 0.5 * p.rho;
    let dq = |x: f64| half_rho * scad_grad(x, p) + lin + quad * (x - center);
    let d2q = |x: f64| half_rho * scad_second(x, p) + quad;

    // |p'| ≤ λ, so q'(x) ∈ [lin + quad(x − c) − ρλ/2, lin + quad(x − c) + ρλ/2].
    let spread = (lin.abs() + half_rho * p.lambda) / quad;
    let mut lo = center - spread;
    let mut hi = center + spread;
    let mut x = (center - lin / quad).clamp(lo, hi);
    for _ in 0..PROX_MAX_ITER {
        let g = dq(x);
        if g.abs() <= tol * (1.0 + x.abs()) {
            return Ok(x);
        }
        if g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * (1.0 + x.abs()) {
            return Ok(0.5 * (lo + hi));
        }
        let newton = x - g / d2q(x);
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NoConvergence("scalar SCAD prox".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{gradient_error, Counters};
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn reference_params() -> ScadParams {
        ScadParams::new(2.0, 4.0, 1e-3, 0.01).unwrap()
    }

    #[test]
    fn value_on_each_branch() {
        let p = reference_params();
        assert!((scad_value(0.0, &p) - 0.06324555320336758).abs() < 1e-15);
        assert!((scad_value(10.0, &p) - 10.0).abs() < 1e-15);
        assert!((scad_value(4.0, &p) - 7.333499994791829).abs() < 1e-13);
    }

    #[test]
    fn gradient_special_points() {
        let p = reference_params();
        assert_eq!(scad_grad(0.0, &p), 0.0);
        assert_eq!(scad_grad(10.0, &p), 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = reference_params();
        let mut rng = SeededRng::new(21);
        for _ in 0..100 {
            let x = 12.0 * rng.normal();
            let h = 1e-6;
            let fd = (scad_value(x + h, &p) - scad_value(x - h, &p)) / (2.0 * h);
            let g = scad_grad(x, &p);
            let err = (fd - g).abs() / g.abs().max(1.0);
            assert!(err <= 1e-6, "x = {x}: fd {fd} vs {g}");
        }
    }

    #[test]
    fn second_derivative_bounds() {
        let p = reference_params().with_rho(2.0);
        let mut rng = SeededRng::new(22);
        for _ in 0..1000 {
            let x = 10.0 * rng.normal();
            let s = scad_second(x, &p);
            assert!(s >= -1.0 / (p.gamma - 1.0) - 1e-12);
            assert!(s <= p.lambda / p.eps.sqrt() + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn continuous_at_seams(lambda in 0.1f64..5.0, gamma in 2.01f64..8.0, eps in 1e-6f64..1e-1) {
            let p = ScadParams::new(lambda, gamma, eps, 1.0).unwrap();
            let inner = value_on_branch(lambda, Branch::Linear, &p) - value_on_branch(lambda, Branch::Quadratic, &p);
            let outer = value_on_branch(gamma * lambda, Branch::Quadratic, &p) - value_on_branch(gamma * lambda, Branch::Flat, &p);
            prop_assert!(inner.abs() <= 1e-12 * (1.0 + lambda * lambda));
            prop_assert!(outer.abs() <= 1e-12 * (1.0 + lambda * lambda * gamma));
            let s_inner = radial_slope_on_branch(lambda, Branch::Linear, &p) - radial_slope_on_branch(lambda, Branch::Quadratic, &p);
            let s_outer = radial_slope_on_branch(gamma * lambda, Branch::Quadratic, &p);
            prop_assert!(s_inner.abs() <= 1e-12 * (1.0 + lambda));
            prop_assert!(s_outer.abs() <= 1e-12 * (1.0 + lambda));
        }

        #[test]
        fn even_symmetry(x in -50.0f64..50.0) {
            let p = reference_params();
            prop_assert_eq!(scad_value(x, &p), scad_value(-x, &p));
            prop_assert_eq!(scad_grad(x, &p), -scad_grad(-x, &p));
        }

        #[test]
        fn prox_meets_tolerance(lin in -20.0f64..20.0, quad in 0.01f64..50.0, center in -20.0f64..20.0, rho in 0.0f64..0.05) {
            let p = reference_params().with_rho(rho);
            let x = scad_scalar_prox(lin, quad, center, &p, PROX_DEFAULT_TOL).unwrap();
            let dq = 0.5 * rho * scad_grad(x, &p) + lin + quad * (x - center);
            // Either the stationarity tolerance holds or the bracket collapsed
            // to a few ulps, which bounds |q'| by the curvature times that width.
            let curvature = quad + 0.5 * rho * p.lambda / p.eps.sqrt();
            prop_assert!(dq.abs() <= PROX_DEFAULT_TOL * (1.0 + x.abs()) + 8.0 * f64::EPSILON * (1.0 + x.abs()) * curvature + 1e-14 * (lin.abs() + quad * center.abs()));
        }
    }

    #[test]
    fn prox_pure_quadratic() {
        let p = reference_params().with_rho(0.0);
        let x = scad_scalar_prox(3.0, 2.0, 1.0, &p, PROX_DEFAULT_TOL).unwrap();
        assert!((x - (1.0 - 1.5)).abs() < 1e-14);
    }

    #[test]
    fn prox_symmetric_minimum() {
        let p = reference_params();
        assert_eq!(scad_scalar_prox(0.0, 1.0, 0.0, &p, PROX_DEFAULT_TOL).unwrap(), 0.0);
    }

    /// Dense grid search followed by ternary refinement on q itself; uses no
    /// derivative information.
    fn brute_force_prox(lin: f64, quad: f64, center: f64, p: &ScadParams) -> f64 {
        let q = |x: f64| 0.5 * p.rho * scad_value(x, p) + lin * x + 0.5 * quad * (x - center).powi(2);
        let (a, b) = (-10.0, 10.0);
        let n = 200_000;
        let h = (b - a) / n as f64;
        let best = (0..=n)
            .map(|k| a + k as f64 * h)
            .min_by(|x, y| q(*x).partial_cmp(&q(*y)).unwrap())
            .unwrap();
        let (mut lo, mut hi) = (best - h, best + h);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if q(m1) < q(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn prox_matches_brute_force() {
        let p = reference_params();
        let x = scad_scalar_prox(1.0, 2.0, 0.0, &p, PROX_DEFAULT_TOL).unwrap();
        let oracle = brute_force_prox(1.0, 2.0, 0.0, &p);
        assert!((x - oracle).abs() <= 1e-8, "{x} vs {oracle}");
        // A weighted case where the penalty matters.
        let p2 = reference_params().with_rho(2.0);
        let x2 = scad_scalar_prox(-0.5, 1.0, 0.3, &p2, PROX_DEFAULT_TOL).unwrap();
        let oracle2 = brute_force_prox(-0.5, 1.0, 0.3, &p2);
        assert!((x2 - oracle2).abs() <= 1e-7, "{x2} vs {oracle2}");
    }

    #[test]
    fn prox_rejects_nonconvex_input() {
        let p = reference_params().with_rho(6.0);
        assert!(matches!(
            scad_scalar_prox(0.0, 1.0, 0.0, &p, 1e-12),
            Err(Error::NotStronglyConvex(_))
        ));
    }

    #[test]
    fn scad_ls_constants() {
        let p = reference_params();
        // Single row with ‖a‖² = 100.
        let prob = build_scad_ls(vec![10.0, 0.0], 1, 2, vec![0.0], p).unwrap();
        assert!((prob.lower_curvature() - 0.0016666666666666668).abs() < 1e-18);
        assert!((prob.lipschitz() - 100.31622776601684).abs() < 1e-12);
    }

    #[test]
    fn scad_ls_rejects_zero_weight() {
        let p = reference_params().with_rho(0.0);
        assert!(matches!(
            build_scad_ls(vec![1.0], 1, 1, vec![0.0], p),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn scad_ls_component_gradient_by_hand() {
        let p = reference_params();
        let prob = build_scad_ls(vec![1.0, 0.0], 1, 2, vec![0.0], p).unwrap();
        let mut g = vec![0.0; 2];
        prob.component(0).gradient(&[1.0, 0.0], &mut g);
        let expected = [1.0 + 0.005 * scad_grad(1.0, &p), 0.005 * scad_grad(0.0, &p)];
        assert!((g[0] - expected[0]).abs() < 1e-15 && (g[1] - expected[1]).abs() < 1e-15);
        assert!(gradient_error(prob.component(0), &[1.0, 0.0]) <= 1e-5);
    }

    #[test]
    fn scad_ls_objective_at_zero() {
        let p = reference_params();
        let mut rng = SeededRng::new(4);
        let (m, n) = (6, 3);
        let rows: Vec<f64> = (0..m * n).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.normal()).collect();
        let prob = build_scad_ls(rows, m, n, b.clone(), p).unwrap();
        let expected = linalg::norm_sq(&b) / (2.0 * m as f64) + 0.5 * p.rho * n as f64 * scad_value(0.0, &p);
        let got = prob.full_objective(&[0.0; 3], &mut Counters::default()).unwrap();
        assert!((got - expected).abs() <= 1e-14 * expected.abs().max(1.0));
    }

    #[test]
    fn lower_curvature_certificate() {
        let p = reference_params();
        let mut rng = SeededRng::new(8);
        let (m, n) = (5, 4);
        let rows: Vec<f64> = (0..m * n).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.normal()).collect();
        let prob = build_scad_ls(rows, m, n, b, p).unwrap();
        let mu = prob.lower_curvature();
        let mut g = vec![0.0; n];
        for _ in 0..500 {
            let x: Vec<f64> = (0..n).map(|_| 8.0 * rng.normal()).collect();
            let y: Vec<f64> = (0..n).map(|_| 8.0 * rng.normal()).collect();
            for i in 0..m {
                let f = prob.component(i);
                f.gradient(&y, &mut g);
                let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
                let gap = f.value(&x) - f.value(&y) - linalg::dot(&g, &diff);
                assert!(gap >= -0.5 * mu * linalg::norm_sq(&diff) - 1e-9);
            }
        }
    }
}
