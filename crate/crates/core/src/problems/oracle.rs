use std::fmt;

use nalgebra::DMatrix;

use crate::linalg;
use crate::rng::SeededRng;
use crate::scad::ScadParams;

/// One smooth component `f_i` with its gradient; the unit of gradient-cost
/// accounting.
pub trait ComponentOracle: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Writes `∇f(x)` into `out` (length `dim`).
    fn gradient(&self, x: &[f64], out: &mut [f64]);

    /// Structure a block proximal solver may exploit.
    fn structure(&self) -> OracleStructure<'_> {
        OracleStructure::General
    }
}

#[derive(Debug, Clone, Copy)]
pub enum OracleStructure<'a> {
    General,
    /// `(ρ/2) Σ_j p(x_j)` with the smoothed SCAD penalty `p`.
    SeparableScad(ScadParams),
    /// `½ xᵀHx + cᵀx + k`
    Quadratic {
        hessian: &'a DMatrix<f64>,
        linear: &'a [f64],
    },
}

/// Evaluation counters of a single run. Problems never hold counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Counters {
    pub function_evals: u64,
    pub gradient_evals: u64,
    pub block_updates: u64,
}

/// `½ xᵀHx + cᵀx + k` with symmetric `H`.
#[derive(Debug, Clone)]
pub struct QuadraticOracle {
    hessian: DMatrix<f64>,
    linear: Vec<f64>,
    constant: f64,
}

impl QuadraticOracle {
    pub fn new(hessian: DMatrix<f64>, linear: Vec<f64>, constant: f64) -> crate::Result<Self> {
        if hessian.nrows() != hessian.ncols() {
            return Err(crate::Error::InvalidProblem("Hessian must be square".into()));
        }
        crate::error::ensure_dim(hessian.nrows(), linear.len())?;
        let sym = (&hessian - hessian.transpose()).abs().max();
        if sym > 1e-12 * (1.0 + hessian.abs().max()) {
            return Err(crate::Error::InvalidProblem("Hessian must be symmetric".into()));
        }
        Ok(Self {
            hessian,
            linear,
            constant,
        })
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    /// Extreme eigenvalues of the Hessian, `(min, max)`.
    pub fn eigen_range(&self) -> (f64, f64) {
        let eig = self.hessian.clone().symmetric_eigen();
        (eig.eigenvalues.min(), eig.eigenvalues.max())
    }
}

impl ComponentOracle for QuadraticOracle {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut hx = vec![0.0; x.len()];
        linalg::mat_vec(&self.hessian, x, &mut hx);
        0.5 * linalg::dot(x, &hx) + linalg::dot(&self.linear, x) + self.constant
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        linalg::mat_vec(&self.hessian, x, out);
        linalg::axpy(1.0, &self.linear, out);
    }

    fn structure(&self) -> OracleStructure<'_> {
        OracleStructure::Quadratic {
            hessian: &self.hessian,
            linear: &self.linear,
        }
    }
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// Oracle assembled from closures.
pub struct FnOracle {
    dim: usize,
    value: Box<ValueFn>,
    gradient: Box<GradFn>,
}

impl FnOracle {
    pub fn new(
        dim: usize,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            value: Box::new(value),
            gradient: Box::new(gradient),
        }
    }
}

impl fmt::Debug for FnOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnOracle").field("dim", &self.dim).finish()
    }
}

impl ComponentOracle for FnOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        (self.gradient)(x, out)
    }
}

pub const FD_STEP: f64 = 1e-6;
pub const FD_REL_TOL: f64 = 1e-5;

/// Central finite-difference gradient.
pub fn finite_difference_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|j| {
            let orig = probe[j];
            probe[j] = orig + step;
            let up = f(&probe);
            probe[j] = orig - step;
            let down = f(&probe);
            probe[j] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Relative gradient error `‖g − g_fd‖ / max(‖g‖, ‖g_fd‖, 1)`.
pub fn gradient_error(oracle: &dyn ComponentOracle, x: &[f64]) -> f64 {
    let mut g = vec![0.0; oracle.dim()];
    oracle.gradient(x, &mut g);
    let fd = finite_difference_gradient(|p| oracle.value(p), x, FD_STEP);
    let scale = linalg::norm(&g).max(linalg::norm(&fd)).max(1.0);
    linalg::dist_sq(&g, &fd).sqrt() / scale
}

/// Largest relative finite-difference error over `probes` points drawn as
/// `scale · N(0, I)`.
pub fn validate_gradient(oracle: &dyn ComponentOracle, probes: usize, scale: f64, rng: &mut SeededRng) -> f64 {
    (0..probes)
        .map(|_| {
            let x: Vec<f64> = (0..oracle.dim()).map(|_| scale * rng.normal()).collect();
            gradient_error(oracle, &x)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_passes_fd_check() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, -1.0]);
        let q = QuadraticOracle::new(h, vec![1.0, -2.0], 0.3).unwrap();
        let mut rng = SeededRng::new(1);
        assert!(validate_gradient(&q, 20, 1.0, &mut rng) <= FD_REL_TOL);
        let (lo, hi) = q.eigen_range();
        assert!(lo < 0.0 && hi > 2.0);
    }

    #[test]
    fn asymmetric_hessian_rejected() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(QuadraticOracle::new(h, vec![0.0; 2], 0.0).is_err());
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let bad = FnOracle::new(1, |x| x[0] * x[0], |x, g| g[0] = 3.0 * x[0]);
        let mut rng = SeededRng::new(2);
        assert!(validate_gradient(&bad, 5, 1.0, &mut rng) > 0.1);
    }
}
