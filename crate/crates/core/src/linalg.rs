//! Dense vector helpers and the few matrix routines the solvers need.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `y += a * x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `out = M x`
pub fn mat_vec(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.ncols(), x.len());
    debug_assert_eq!(m.nrows(), out.len());
    out.iter_mut().for_each(|v| *v = 0.0);
    for (j, &xj) in x.iter().enumerate() {
        if xj != 0.0 {
            axpy(xj, m.column(j).as_slice(), out);
        }
    }
}

/// `out += M x`
pub fn mat_vec_acc(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    for (j, &xj) in x.iter().enumerate() {
        if xj != 0.0 {
            axpy(xj, m.column(j).as_slice(), out);
        }
    }
}

/// `out = Mᵀ y`
pub fn mat_t_vec(m: &DMatrix<f64>, y: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.nrows(), y.len());
    debug_assert_eq!(m.ncols(), out.len());
    for (j, o) in out.iter_mut().enumerate() {
        *o = dot(m.column(j).as_slice(), y);
    }
}

pub const POWER_ITERATION_MAX: usize = 200;
pub const POWER_ITERATION_TOL: f64 = 1e-10;

/// Spectral norm of the linear map given by `apply` (x ↦ Mx) and
/// `apply_t` (y ↦ Mᵀy), estimated by power iteration on MᵀM.
pub fn spectral_norm_with<F, G>(ncols: usize, nrows: usize, apply: F, apply_t: G) -> f64
where
    F: Fn(&[f64], &mut [f64]),
    G: Fn(&[f64], &mut [f64]),
{
    if ncols == 0 || nrows == 0 {
        return 0.0;
    }
    // Deterministic start with distinct entries so it is unlikely to be
    // orthogonal to the leading right singular vector.
    let mut v: Vec<f64> = (0..ncols).map(|j| 1.0 + 0.1 * ((j % 7) as f64)).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut mv = vec![0.0; nrows];
    let mut w = vec![0.0; ncols];
    let mut previous = 0.0;
    for _ in 0..POWER_ITERATION_MAX {
        apply(&v, &mut mv);
        apply_t(&mv, &mut w);
        let rayleigh = dot(&v, &w);
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        w.iter().zip(v.iter_mut()).for_each(|(wi, vi)| *vi = wi / nw);
        if (rayleigh - previous).abs() <= POWER_ITERATION_TOL * rayleigh {
            break;
        }
        previous = rayleigh;
    }
    apply(&v, &mut mv);
    norm(&mv)
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    spectral_norm_with(
        m.ncols(),
        m.nrows(),
        |x, out| mat_vec(m, x, out),
        |y, out| mat_t_vec(m, y, out),
    )
}

/// LU factorization with partial pivoting plus a reciprocal-condition check.
pub struct CheckedLu {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    pub rcond: f64,
}

pub const RCOND_THRESHOLD: f64 = 1e-12;

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

impl CheckedLu {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                found: a.ncols(),
            });
        }
        let lu = a.clone().lu();
        let inv = lu
            .try_inverse()
            .ok_or(Error::SingularMatrix { rcond: 0.0 })?;
        let rcond = 1.0 / (one_norm(a) * one_norm(&inv));
        if !rcond.is_finite() || rcond < RCOND_THRESHOLD {
            return Err(Error::SingularMatrix {
                rcond: if rcond.is_finite() { rcond } else { 0.0 },
            });
        }
        Ok(Self { lu, rcond })
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.lu.solve(b).expect("factor checked non-singular")
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let rhs = nalgebra::DVector::from_column_slice(b);
        self.lu
            .solve(&rhs)
            .expect("factor checked non-singular")
            .as_slice()
            .to_vec()
    }
}
