use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{ensure_dim, ensure_finite, Error, Result};
use crate::linalg::{self, CheckedLu};

use super::{ComponentOracle, FeasibleSet};

/// One primal block `x_i ∈ X_i ⊂ R^{d_i}` with its objective and coupling
/// matrix `A_i ∈ R^{n×d_i}`.
#[derive(Debug, Clone)]
pub struct BlockSpec {
    pub oracle: Arc<dyn ComponentOracle>,
    pub set: FeasibleSet,
    pub coupling: DMatrix<f64>,
}

impl BlockSpec {
    pub fn new(oracle: Arc<dyn ComponentOracle>, set: FeasibleSet, coupling: DMatrix<f64>) -> Result<Self> {
        ensure_dim(oracle.dim(), coupling.ncols())?;
        if let Some(d) = set.dim() {
            ensure_dim(oracle.dim(), d)?;
        }
        Ok(Self { oracle, set, coupling })
    }

    pub fn dim(&self) -> usize {
        self.coupling.ncols()
    }
}

/// `min Σ_{i<m} f_i(x_i) + f_m(x_m)` s.t. `Σ_{i<m} A_i x_i + A_m x_m = b`,
/// `x_i ∈ X_i`, with `x_m ∈ R^n` free and `A_m` invertible.
#[derive(Debug, Clone)]
pub struct MultiBlockProblem {
    blocks: Vec<BlockSpec>,
    last: Arc<dyn ComponentOracle>,
    last_coupling: DMatrix<f64>,
    rhs: Vec<f64>,
    lipschitz: f64,
    lower_curvature: f64,
}

impl MultiBlockProblem {
    pub fn new(
        blocks: Vec<BlockSpec>,
        last: Arc<dyn ComponentOracle>,
        last_coupling: DMatrix<f64>,
        rhs: Vec<f64>,
        lipschitz: f64,
        lower_curvature: f64,
    ) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidProblem("at least one primal block is required".into()));
        }
        let n = rhs.len();
        if last_coupling.nrows() != last_coupling.ncols() {
            return Err(Error::InvalidProblem("last coupling matrix must be square".into()));
        }
        ensure_dim(n, last_coupling.nrows())?;
        ensure_dim(n, last.dim())?;
        ensure_finite(&rhs, "right-hand side")?;
        for b in &blocks {
            ensure_dim(n, b.coupling.nrows())?;
        }
        if !(lower_curvature > 0.0 && lipschitz >= lower_curvature && lipschitz.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "need 0 < μ ≤ L, got μ = {lower_curvature}, L = {lipschitz}"
            )));
        }
        Ok(Self {
            blocks,
            last,
            last_coupling,
            rhs,
            lipschitz,
            lower_curvature,
        })
    }

    /// Total number of blocks `m`, including the last one.
    pub fn num_blocks(&self) -> usize {
        self.blocks.len() + 1
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn last_oracle(&self) -> &dyn ComponentOracle {
        self.last.as_ref()
    }

    pub fn last_coupling(&self) -> &DMatrix<f64> {
        &self.last_coupling
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn constraint_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn lower_curvature(&self) -> f64 {
        self.lower_curvature
    }

    /// `Σ_{i<m} A_i x_i + A_m x_m − b` in the original coordinates.
    pub fn original_residual(&self, x: &[f64], xm: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.rhs.len()];
        let mut offset = 0;
        for b in &self.blocks {
            let d = b.dim();
            linalg::mat_vec_acc(&b.coupling, &x[offset..offset + d], &mut r);
            offset += d;
        }
        linalg::mat_vec_acc(&self.last_coupling, xm, &mut r);
        linalg::axpy(-1.0, &self.rhs, &mut r);
        r
    }
}

/// The problem after left-multiplying the constraint by `A_m⁻¹`, so that the
/// last block enters with identity coefficient: `𝐀x + x_m = 𝐛`.
#[derive(Debug, Clone)]
pub struct ReformulatedProblem {
    problem: MultiBlockProblem,
    couplings: Vec<DMatrix<f64>>,
    rhs: Vec<f64>,
    offsets: Vec<usize>,
    block_norms: Vec<f64>,
    abar: f64,
    anorm2: f64,
    spectral: f64,
    rcond: f64,
}

/// Reformulates with an LU factorization of `A_m` (partial pivoting).
pub fn reformulate(problem: &MultiBlockProblem) -> Result<ReformulatedProblem> {
    let lu = CheckedLu::new(&problem.last_coupling)?;
    let couplings: Vec<DMatrix<f64>> = problem
        .blocks
        .iter()
        .map(|b| lu.solve_matrix(&b.coupling))
        .collect();
    let rhs = lu.solve_vec(&problem.rhs);
    let block_norms: Vec<f64> = couplings.iter().map(linalg::spectral_norm).collect();
    let abar = block_norms.iter().copied().fold(0.0, f64::max);
    let anorm2 = block_norms.iter().map(|a| a * a).sum();
    let mut offsets = Vec::with_capacity(couplings.len() + 1);
    let mut acc = 0;
    for c in &couplings {
        offsets.push(acc);
        acc += c.ncols();
    }
    offsets.push(acc);
    let mut rp = ReformulatedProblem {
        problem: problem.clone(),
        couplings,
        rhs,
        offsets,
        block_norms,
        abar,
        anorm2,
        spectral: 0.0,
        rcond: lu.rcond,
    };
    rp.spectral = if rp.couplings.len() == 1 {
        rp.block_norms[0]
    } else {
        let n = rp.rhs.len();
        linalg::spectral_norm_with(
            rp.total_dim(),
            n,
            |x, out| rp.apply(x, out),
            |y, out| rp.apply_transpose(y, out),
        )
    };
    Ok(rp)
}

impl ReformulatedProblem {
    pub fn original(&self) -> &MultiBlockProblem {
        &self.problem
    }

    /// Number of primal blocks `m − 1`.
    pub fn num_primal_blocks(&self) -> usize {
        self.couplings.len()
    }

    pub fn constraint_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn total_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// `𝐀_i = A_m⁻¹ A_i`
    pub fn coupling(&self, i: usize) -> &DMatrix<f64> {
        &self.couplings[i]
    }

    /// `𝐛 = A_m⁻¹ b`
    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn block_norms(&self) -> &[f64] {
        &self.block_norms
    }

    /// `Ā = max_i ‖𝐀_i‖`
    pub fn abar(&self) -> f64 {
        self.abar
    }

    /// `Σ_i ‖𝐀_i‖²`
    pub fn anorm2(&self) -> f64 {
        self.anorm2
    }

    /// Spectral norm of the stacked `𝐀 = [𝐀_1, …, 𝐀_{m−1}]`.
    pub fn spectral_norm(&self) -> f64 {
        self.spectral
    }

    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    pub fn block_oracle(&self, i: usize) -> &dyn ComponentOracle {
        self.problem.blocks[i].oracle.as_ref()
    }

    pub fn block_set(&self, i: usize) -> &FeasibleSet {
        &self.problem.blocks[i].set
    }

    pub fn last_oracle(&self) -> &dyn ComponentOracle {
        self.problem.last.as_ref()
    }

    /// `out = 𝐀x` for the stacked primal vector `x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, c) in self.couplings.iter().enumerate() {
            linalg::mat_vec_acc(c, &x[self.block_range(i)], out);
        }
    }

    /// `out = 𝐀ᵀy`
    pub fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        for (i, c) in self.couplings.iter().enumerate() {
            let r = self.block_range(i);
            linalg::mat_t_vec(c, y, &mut out[r]);
        }
    }

    /// `‖𝐀x + x_m − 𝐛‖²`
    pub fn feasibility_sq(&self, x: &[f64], xm: &[f64]) -> f64 {
        let mut r = vec![0.0; self.rhs.len()];
        self.apply(x, &mut r);
        r.iter()
            .zip(xm)
            .zip(&self.rhs)
            .map(|((a, m), b)| {
                let v = a + m - b;
                v * v
            })
            .sum()
    }

    /// `Σ_i f_i(x_i) + f_m(x_m)`
    pub fn objective(&self, x: &[f64], xm: &[f64]) -> f64 {
        let blocks: f64 = (0..self.num_primal_blocks())
            .map(|i| self.block_oracle(i).value(&x[self.block_range(i)]))
            .sum();
        blocks + self.last_oracle().value(xm)
    }

    pub(crate) fn project_blocks(&self, x: &mut [f64]) {
        for i in 0..self.num_primal_blocks() {
            let r = self.block_range(i);
            self.block_set(i).project_in_place(&mut x[r]);
        }
    }

    /// Largest `‖A_m 𝐀_i − A_i‖ / ‖A_i‖` (Frobenius) over blocks, and the
    /// relative residual `‖A_m 𝐛 − b‖ / ‖b‖`.
    pub fn reconstruction_error(&self) -> (f64, f64) {
        let am = &self.problem.last_coupling;
        let blocks = self
            .couplings
            .iter()
            .zip(&self.problem.blocks)
            .map(|(c, b)| (am * c - &b.coupling).norm() / b.coupling.norm().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        let mut back = vec![0.0; self.rhs.len()];
        linalg::mat_vec(am, &self.rhs, &mut back);
        let rhs_err = linalg::dist_sq(&back, &self.problem.rhs).sqrt()
            / linalg::norm(&self.problem.rhs).max(f64::MIN_POSITIVE);
        (blocks, rhs_err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::QuadraticOracle;
    use crate::rng::SeededRng;

    fn quad(n: usize) -> Arc<dyn ComponentOracle> {
        Arc::new(QuadraticOracle::new(DMatrix::identity(n, n), vec![0.0; n], 0.0).unwrap())
    }

    fn problem_with(am: DMatrix<f64>, b: Vec<f64>, rng: &mut SeededRng) -> MultiBlockProblem {
        let n = b.len();
        let blocks = (0..3)
            .map(|i| {
                let d = i % 2 + 1;
                let a = DMatrix::from_fn(n, d, |_, _| rng.normal());
                BlockSpec::new(quad(d), FeasibleSet::WholeSpace, a).unwrap()
            })
            .collect();
        MultiBlockProblem::new(blocks, quad(n), am, b, 1.0, 1.0).unwrap()
    }

    #[test]
    fn identity_last_block_keeps_data() {
        let mut rng = SeededRng::new(5);
        let p = problem_with(DMatrix::identity(2, 2), vec![1.0, -3.0], &mut rng);
        let rp = reformulate(&p).unwrap();
        for i in 0..3 {
            assert_eq!(rp.coupling(i), &p.blocks()[i].coupling);
        }
        assert_eq!(rp.rhs(), &[1.0, -3.0]);
        assert_eq!(rp.total_dim(), 1 + 2 + 1);
    }

    #[test]
    fn scaled_identity() {
        let mut rng = SeededRng::new(6);
        let p = problem_with(DMatrix::identity(2, 2) * 2.0, vec![2.0, 4.0], &mut rng);
        let rp = reformulate(&p).unwrap();
        assert_eq!(rp.rhs(), &[1.0, 2.0]);
    }

    #[test]
    fn random_well_conditioned_multiply_back() {
        let mut rng = SeededRng::new(7);
        let am = DMatrix::from_fn(5, 5, |i, j| rng.normal() + if i == j { 4.0 } else { 0.0 });
        let b: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
        let p = problem_with(am, b, &mut rng);
        let rp = reformulate(&p).unwrap();
        let (blocks, rhs) = rp.reconstruction_error();
        assert!(blocks <= 1e-10, "{blocks}");
        assert!(rhs <= 1e-10, "{rhs}");
        assert!(rp.abar() <= rp.anorm2().sqrt() + 1e-12);
        assert!(rp.abar() <= rp.spectral_norm() * (1.0 + 1e-8));
        assert!(rp.spectral_norm() <= rp.anorm2().sqrt() * (1.0 + 1e-8));
    }

    #[test]
    fn singular_last_block_is_an_error() {
        let mut rng = SeededRng::new(8);
        let am = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = problem_with(am, vec![1.0, 1.0], &mut rng);
        assert!(matches!(reformulate(&p), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn stacked_operators_are_adjoint() {
        let mut rng = SeededRng::new(9);
        let am = DMatrix::from_fn(4, 4, |i, j| rng.normal() + if i == j { 3.0 } else { 0.0 });
        let p = problem_with(am, vec![1.0, 2.0, 3.0, 4.0], &mut rng);
        let rp = reformulate(&p).unwrap();
        let x: Vec<f64> = (0..rp.total_dim()).map(|_| rng.normal()).collect();
        let y: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let mut ax = vec![0.0; 4];
        rp.apply(&x, &mut ax);
        let mut aty = vec![0.0; rp.total_dim()];
        rp.apply_transpose(&y, &mut aty);
        assert!((linalg::dot(&ax, &y) - linalg::dot(&x, &aty)).abs() < 1e-10);
    }
}
