//! Seeded instance generators for the SCAD least-squares and compressed-sensing families.
//!
//! Sampling order (fixed, so instances can be reproduced elsewhere):
//! - scad-ls: entries of `A` row-major, each `N(0,1)`; then the support of `x̂`
//!   via `sample_indices(n, nnz)`; then one `N(0,1)` value per support index in
//!   draw order.
//! - compressed-sensing: for each block, column by column, row by row a
//!   `bernoulli(sparsity)` mask draw followed by an `N(0,1)` value when the mask
//!   fires; an all-zero column is redrawn in full. Then the support of the
//!   stacked `x̂ = (x̂_1, .., x̂_{m-1}, x̂_m)` and its values as above.
//!
//! Normals come from [`SeededRng::normal`] (Box–Muller).

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{BlockSpec, ComponentOracle, FeasibleSet, FiniteSumProblem, MultiBlockProblem};
use crate::rng::SeededRng;
use crate::scad::{build_scad_ls, ScadParams, SeparableScadOracle};

/// SCAD weight in the compressed-sensing objective `Σ 𝒫_{λ,γ,ε}(x_i)`.
pub const CS_SCAD_WEIGHT: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    ScadLs,
    CompressedSensing,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scad-ls" => Ok(Self::ScadLs),
            "compressed-sensing" => Ok(Self::CompressedSensing),
            other => Err(Error::InvalidParameter(format!("unknown family `{other}`"))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::ScadLs => "scad-ls",
            Self::CompressedSensing => "compressed-sensing",
        })
    }
}

/// Instance specification. For `scad-ls`, `m` is the number of rows and `n`
/// the number of columns; for `compressed-sensing`, `m` counts blocks
/// including the free last block and `n` is the number of constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub family: Family,
    pub m: usize,
    pub n: usize,
    pub block_dim: usize,
    pub sparsity: f64,
    pub nnz_signal: usize,
    pub seed: u64,
    pub scad: ScadParams,
}

impl GenSpec {
    pub fn scad_ls(m: usize, n: usize, seed: u64) -> Self {
        Self {
            family: Family::ScadLs,
            m,
            n,
            block_dim: 1,
            sparsity: 1.0,
            nnz_signal: 20.min(n),
            seed,
            scad: ScadParams::default(),
        }
    }

    pub fn compressed_sensing(m: usize, n: usize, seed: u64) -> Self {
        let total = m.saturating_sub(1) + n;
        Self {
            family: Family::CompressedSensing,
            m,
            n,
            block_dim: 1,
            sparsity: 0.1,
            nnz_signal: 200.min(total),
            seed,
            scad: ScadParams::default().with_rho(CS_SCAD_WEIGHT),
        }
    }

    /// Length of the ground-truth vector.
    pub fn signal_dim(&self) -> usize {
        match self.family {
            Family::ScadLs => self.n,
            Family::CompressedSensing => self.m.saturating_sub(1) * self.block_dim + self.n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        match self.family {
            Family::ScadLs if self.m == 0 => return bad("m must be positive".into()),
            Family::CompressedSensing if self.m < 2 => {
                return bad("compressed sensing needs m ≥ 2 blocks".into())
            }
            _ => {}
        }
        if self.block_dim == 0 {
            return bad("block dimension must be positive".into());
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return bad(format!("sparsity must lie in (0, 1], got {}", self.sparsity));
        }
        if self.nnz_signal > self.signal_dim() {
            return bad(format!(
                "nnz_signal = {} exceeds the signal dimension {}",
                self.nnz_signal,
                self.signal_dim()
            ));
        }
        self.scad.validate()
    }
}

fn sparse_signal(dim: usize, nnz: usize, rng: &mut SeededRng) -> Vec<f64> {
    let mut x = vec![0.0; dim];
    let support = rng.sample_indices(dim, nnz);
    for j in support {
        x[j] = rng.normal();
    }
    x
}

/// SCAD least-squares instance and its raw data.
#[derive(Debug, Clone)]
pub struct ScadLsInstance {
    pub spec: GenSpec,
    pub problem: FiniteSumProblem,
    /// `A`, row-major `m × n`.
    pub matrix: Vec<f64>,
    pub rhs: Vec<f64>,
    pub ground_truth: Vec<f64>,
}

pub fn gen_scad_ls(spec: &GenSpec) -> Result<ScadLsInstance> {
    if spec.family != Family::ScadLs {
        return Err(Error::InvalidParameter("spec family is not scad-ls".into()));
    }
    spec.validate()?;
    let (m, n) = (spec.m, spec.n);
    let mut rng = SeededRng::new(spec.seed);
    let matrix: Vec<f64> = (0..m * n).map(|_| rng.normal()).collect();
    let ground_truth = sparse_signal(n, spec.nnz_signal, &mut rng);
    let rhs: Vec<f64> = matrix.chunks_exact(n).map(|row| crate::linalg::dot(row, &ground_truth)).collect();
    let problem = build_scad_ls(matrix.clone(), m, n, rhs.clone(), spec.scad)?;
    Ok(ScadLsInstance {
        spec: spec.clone(),
        problem,
        matrix,
        rhs,
        ground_truth,
    })
}

/// Compressed-sensing instance and its raw data.
#[derive(Debug, Clone)]
pub struct CompressedSensingInstance {
    pub spec: GenSpec,
    pub problem: MultiBlockProblem,
    /// `A_1, .., A_{m-1}`, each `n × d_i`.
    pub blocks: Vec<DMatrix<f64>>,
    pub rhs: Vec<f64>,
    /// Stacked `(x̂_1, .., x̂_{m-1}, x̂_m)`.
    pub ground_truth: Vec<f64>,
    pub redrawn_columns: usize,
}

impl CompressedSensingInstance {
    /// Ground-truth primal blocks (without the last block).
    pub fn truth_blocks(&self) -> Vec<&[f64]> {
        let d = self.spec.block_dim;
        self.ground_truth[..self.blocks.len() * d].chunks_exact(d).collect()
    }

    pub fn truth_last(&self) -> &[f64] {
        &self.ground_truth[self.blocks.len() * self.spec.block_dim..]
    }
}

/// Assembles the compressed-sensing problem from coupling blocks and a right-hand side.
pub fn build_compressed_sensing(blocks: &[DMatrix<f64>], rhs: Vec<f64>, scad: ScadParams) -> Result<MultiBlockProblem> {
    let n = rhs.len();
    let lipschitz = scad.smoothness();
    let mu = scad.weak_convexity();
    let specs = blocks
        .iter()
        .map(|a| {
            let oracle: Arc<dyn ComponentOracle> = Arc::new(SeparableScadOracle::new(a.ncols(), scad)?);
            BlockSpec::new(oracle, FeasibleSet::WholeSpace, a.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    let last: Arc<dyn ComponentOracle> = Arc::new(SeparableScadOracle::new(n, scad)?);
    MultiBlockProblem::new(specs, last, DMatrix::identity(n, n), rhs, lipschitz.max(mu), mu)
}

pub fn gen_compressed_sensing(spec: &GenSpec) -> Result<CompressedSensingInstance> {
    if spec.family != Family::CompressedSensing {
        return Err(Error::InvalidParameter("spec family is not compressed-sensing".into()));
    }
    spec.validate()?;
    let (n, d) = (spec.n, spec.block_dim);
    let mut rng = SeededRng::new(spec.seed);
    let mut redrawn_columns = 0;
    let mut blocks = Vec::with_capacity(spec.m - 1);
    let mut column = vec![0.0; n];
    for _ in 0..spec.m - 1 {
        let mut a = DMatrix::zeros(n, d);
        for j in 0..d {
            loop {
                let mut any = false;
                for v in column.iter_mut() {
                    *v = if rng.bernoulli(spec.sparsity) {
                        any = true;
                        rng.normal()
                    } else {
                        0.0
                    };
                }
                if any {
                    break;
                }
                redrawn_columns += 1;
            }
            a.column_mut(j).copy_from_slice(&column);
        }
        blocks.push(a);
    }
    let ground_truth = sparse_signal(spec.signal_dim(), spec.nnz_signal, &mut rng);
    let split = (spec.m - 1) * d;
    let mut rhs = ground_truth[split..].to_vec();
    for (a, xi) in blocks.iter().zip(ground_truth[..split].chunks_exact(d)) {
        crate::linalg::mat_vec_acc(a, xi, &mut rhs);
    }
    let problem = build_compressed_sensing(&blocks, rhs.clone(), spec.scad)?;
    Ok(CompressedSensingInstance {
        spec: spec.clone(),
        problem,
        blocks,
        rhs,
        ground_truth,
        redrawn_columns,
    })
}
