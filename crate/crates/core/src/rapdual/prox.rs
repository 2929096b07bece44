//! Exact block updates `argmin_{x∈X_i} f_i(x) + ⟨lin, x⟩ + (q/2)‖x − c‖²`.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::problems::{ComponentOracle, FeasibleSet, OracleStructure};
use crate::scad::{scad_scalar_prox, PROX_DEFAULT_TOL};

/// Pluggable solver for the block subproblem.
pub trait BlockProx: Send + Sync + fmt::Debug {
    /// Writes `argmin_{x∈set} f(x) + ⟨lin, x⟩ + (quad/2)‖x − center‖²` into
    /// `out`. `out` holds a warm start on entry.
    fn prox(&self, f: &dyn ComponentOracle, set: &FeasibleSet, lin: &[f64], quad: f64, center: &[f64], out: &mut [f64]) -> Result<()>;
}

/// Dispatches on [`OracleStructure`]: per-coordinate SCAD prox, a linear
/// solve for unconstrained quadratics, and projected gradient otherwise.
#[derive(Debug, Clone, Copy)]
pub struct DefaultBlockProx {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DefaultBlockProx {
    fn default() -> Self {
        Self {
            tol: PROX_DEFAULT_TOL,
            max_iter: 100_000,
        }
    }
}

impl BlockProx for DefaultBlockProx {
    fn prox(&self, f: &dyn ComponentOracle, set: &FeasibleSet, lin: &[f64], quad: f64, center: &[f64], out: &mut [f64]) -> Result<()> {
        match (f.structure(), set) {
            (OracleStructure::SeparableScad(params), _) => {
                for j in 0..out.len() {
                    out[j] = scad_scalar_prox(lin[j], quad, center[j], &params, self.tol)?;
                }
                set.project_in_place(out);
                Ok(())
            }
            (OracleStructure::Quadratic { hessian, linear }, FeasibleSet::WholeSpace) => {
                quadratic_prox(hessian, linear, lin, quad, center, out)
            }
            _ => projected_gradient_prox(f, set, lin, quad, center, out, self.tol, self.max_iter),
        }
    }
}

fn quadratic_prox(h: &DMatrix<f64>, c: &[f64], lin: &[f64], quad: f64, center: &[f64], out: &mut [f64]) -> Result<()> {
    let d = out.len();
    let mut a = h.clone();
    for j in 0..d {
        a[(j, j)] += quad;
    }
    let rhs = DVector::from_iterator(d, (0..d).map(|j| quad * center[j] - lin[j] - c[j]));
    let sol = a
        .cholesky()
        .ok_or_else(|| Error::NotStronglyConvex("block quadratic H + qI is not positive definite".into()))?
        .solve(&rhs);
    out.copy_from_slice(sol.as_slice());
    Ok(())
}

/// Projected gradient with a backtracked step. The step is accepted when the
/// observed curvature along it is at most its inverse.
#[allow(clippy::too_many_arguments)]
fn projected_gradient_prox(
    f: &dyn ComponentOracle,
    set: &FeasibleSet,
    lin: &[f64],
    quad: f64,
    center: &[f64],
    out: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<()> {
    let d = out.len();
    let grad = |x: &[f64], g: &mut [f64]| {
        f.gradient(x, g);
        for j in 0..d {
            g[j] += lin[j] + quad * (x[j] - center[j]);
        }
    };
    set.project_in_place(out);
    let mut g = vec![0.0; d];
    let mut g_trial = vec![0.0; d];
    let mut trial = vec![0.0; d];
    let mut step = 1.0 / quad;
    grad(out, &mut g);
    for _ in 0..max_iter {
        for j in 0..d {
            trial[j] = out[j] - g[j];
        }
        set.project_in_place(&mut trial);
        if linalg::dist_sq(out, &trial).sqrt() <= tol * (1.0 + linalg::norm(out)) {
            return Ok(());
        }
        loop {
            for j in 0..d {
                trial[j] = out[j] - step * g[j];
            }
            set.project_in_place(&mut trial);
            grad(&trial, &mut g_trial);
            let mut curv = 0.0;
            let mut dist = 0.0;
            for j in 0..d {
                let diff = trial[j] - out[j];
                curv += (g_trial[j] - g[j]) * diff;
                dist += diff * diff;
            }
            if dist == 0.0 || curv * step <= dist {
                out.copy_from_slice(&trial);
                std::mem::swap(&mut g, &mut g_trial);
                break;
            }
            step *= 0.5;
            if step < 1e-300 {
                return Err(Error::NoConvergence("block prox step underflow".into()));
            }
        }
        step *= 1.5;
    }
    Err(Error::NoConvergence("block prox iteration limit".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{FnOracle, QuadraticOracle};
    use crate::scad::{SeparableScadOracle, ScadParams};

    #[test]
    fn quadratic_block_closed_form() {
        // ψ = (κ/2)‖x‖², update = (η x_prev − lin)/(κ + η).
        let kappa = 3.0;
        let f = QuadraticOracle::new(DMatrix::from_element(1, 1, kappa), vec![0.0], 0.0).unwrap();
        let (eta, x_prev, lin) = (2.0, 0.7, -1.1);
        let mut out = [0.0];
        DefaultBlockProx::default()
            .prox(&f, &FeasibleSet::WholeSpace, &[lin], eta, &[x_prev], &mut out)
            .unwrap();
        let exact = (eta * x_prev - lin) / (kappa + eta);
        assert!((out[0] - exact).abs() < 1e-14);
        // Grid oracle.
        let q = |x: f64| 0.5 * kappa * x * x + lin * x + 0.5 * eta * (x - x_prev).powi(2);
        let best = (0..=400_000).map(|k| -2.0 + k as f64 * 1e-5).min_by(|a, b| q(*a).total_cmp(&q(*b))).unwrap();
        assert!((out[0] - best).abs() < 2e-5);
    }

    #[test]
    fn general_path_matches_quadratic_path() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let q = QuadraticOracle::new(h.clone(), vec![0.3, -0.1], 0.0).unwrap();
        let h2 = h.clone();
        let g = FnOracle::new(
            2,
            move |x| 0.5 * (h2[(0, 0)] * x[0] * x[0] + 2.0 * h2[(0, 1)] * x[0] * x[1] + h2[(1, 1)] * x[1] * x[1]) + 0.3 * x[0] - 0.1 * x[1],
            move |x, out| {
                out[0] = 2.0 * x[0] + 0.5 * x[1] + 0.3;
                out[1] = 0.5 * x[0] + x[1] - 0.1;
            },
        );
        let prox = DefaultBlockProx::default();
        let mut a = [0.0; 2];
        let mut b = [0.0; 2];
        prox.prox(&q, &FeasibleSet::WholeSpace, &[1.0, 2.0], 0.5, &[0.1, 0.2], &mut a).unwrap();
        prox.prox(&g, &FeasibleSet::WholeSpace, &[1.0, 2.0], 0.5, &[0.1, 0.2], &mut b).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-10 && (a[1] - b[1]).abs() < 1e-10);
    }

    #[test]
    fn boxed_quadratic_uses_projection() {
        let q = QuadraticOracle::new(DMatrix::identity(2, 2), vec![0.0, 0.0], 0.0).unwrap();
        let set = FeasibleSet::cube(2, 0.0, 1.0).unwrap();
        let mut out = [0.5, 0.5];
        DefaultBlockProx::default().prox(&q, &set, &[5.0, -5.0], 1.0, &[0.0, 0.0], &mut out).unwrap();
        assert!(out[0].abs() < 1e-10 && (out[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn scad_block_is_coordinatewise() {
        let p = ScadParams::default().with_rho(2.0);
        let f = SeparableScadOracle::new(2, p).unwrap();
        let mut out = [0.0; 2];
        DefaultBlockProx::default()
            .prox(&f, &FeasibleSet::WholeSpace, &[0.5, -3.0], 2.0, &[1.0, 0.0], &mut out)
            .unwrap();
        for j in 0..2 {
            let expect = scad_scalar_prox([0.5, -3.0][j], 2.0, [1.0, 0.0][j], &p, PROX_DEFAULT_TOL).unwrap();
            assert_eq!(out[j], expect);
        }
    }
}
