//! Stationarity measures, run records and the (ε, δ) certificate.

mod certificate;
mod record;

pub use certificate::{eps_delta_certificate, solve_proximal_subproblem, Certificate, SubproblemOptions, SubproblemSolution};
pub use record::{mean_trajectory, read_csv, write_csv, Monitor, MonitorOptions, RecordRow, RunRecord, StopReason};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::linalg;
use crate::problems::{FeasibleSet, FiniteSumProblem, ReformulatedProblem};

/// Points may sit outside the set by at most this much.
pub const SET_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub grad_norm_sq: f64,
    pub ncone_dist_sq: f64,
    pub strong_gap: Option<f64>,
    pub feasibility_sq: Option<f64>,
    pub kkt_block_sq: Option<f64>,
}

/// `[d(g, −N_X(x))]²` with `N_X(x) = {v : ⟨v, y − x⟩ ≤ 0 ∀y ∈ X}`.
pub fn ncone_distance_sq(g: &[f64], set: &FeasibleSet, x: &[f64]) -> Result<f64> {
    ensure_dim(g.len(), x.len())?;
    let violation = set.violation(x);
    if violation > SET_TOLERANCE {
        return Err(Error::OutsideSet(violation));
    }
    Ok(ncone_unchecked(g, set, x, 0))
}

/// Same as [`ncone_distance_sq`] for a sub-vector starting at `offset`.
fn ncone_unchecked(g: &[f64], set: &FeasibleSet, x: &[f64], offset: usize) -> f64 {
    match set {
        FeasibleSet::WholeSpace => linalg::norm_sq(g),
        FeasibleSet::Box(b) => {
            let (lo, hi) = (&b.lower()[offset..], &b.upper()[offset..]);
            g.iter()
                .zip(x)
                .zip(lo.iter().zip(hi))
                .map(|((&gj, &xj), (&l, &u))| {
                    let at_lower = xj <= l;
                    let at_upper = xj >= u;
                    let r = match (at_lower, at_upper) {
                        (true, true) => 0.0,
                        // −N = {w ≥ 0}
                        (true, false) => gj.min(0.0),
                        // −N = {w ≤ 0}
                        (false, true) => gj.max(0.0),
                        (false, false) => gj,
                    };
                    r * r
                })
                .sum()
        }
    }
}

/// `max_{z∈X} ⟨g, x − z⟩` for a compact box.
pub fn strong_gap_from_gradient(g: &[f64], set: &FeasibleSet, x: &[f64]) -> Result<f64> {
    ensure_dim(g.len(), x.len())?;
    let FeasibleSet::Box(b) = set else {
        return Err(Error::NotCompact);
    };
    if !set.is_compact() {
        return Err(Error::NotCompact);
    }
    let violation = set.violation(x);
    if violation > SET_TOLERANCE {
        return Err(Error::OutsideSet(violation));
    }
    let gap = g
        .iter()
        .zip(x)
        .zip(b.lower().iter().zip(b.upper()))
        .map(|((&gj, &xj), (&l, &u))| gj * xj - (gj * l).min(gj * u))
        .sum::<f64>();
    Ok(gap.max(0.0))
}

/// Gap function of the finite-sum problem at `x`. Not charged to counters.
pub fn strong_gap(p: &FiniteSumProblem, x: &[f64]) -> Result<f64> {
    ensure_dim(p.dim(), x.len())?;
    let mut g = vec![0.0; p.dim()];
    p.gradient_unchecked(x, &mut g);
    strong_gap_from_gradient(&g, p.set(), x)
}

/// All finite-sum stationarity measures at `x`. Not charged to counters.
pub fn stationarity(p: &FiniteSumProblem, x: &[f64]) -> Result<StationarityReport> {
    ensure_dim(p.dim(), x.len())?;
    let mut g = vec![0.0; p.dim()];
    p.gradient_unchecked(x, &mut g);
    let strong_gap = if p.set().is_compact() {
        Some(strong_gap_from_gradient(&g, p.set(), x)?)
    } else {
        None
    };
    Ok(StationarityReport {
        grad_norm_sq: linalg::norm_sq(&g),
        ncone_dist_sq: ncone_distance_sq(&g, p.set(), x)?,
        strong_gap,
        feasibility_sq: None,
        kkt_block_sq: None,
    })
}

/// Proximal centers of the current subproblem, used to form the multiplier
/// from `∇ψ_m` instead of `∇f_m`.
#[derive(Debug, Clone, Copy)]
pub struct KktCenters<'a> {
    pub center_m: &'a [f64],
    pub mu: f64,
}

/// Multi-block KKT residuals with `λ̂ = −∇f_m(x_m)` (or `−∇ψ_m(x_m)` when
/// centers are given).
///
/// `grad_norm_sq` is `Σ_i ‖∇f_i(x_i) + 𝐀_iᵀλ̂‖²`, `ncone_dist_sq` its
/// projected counterpart, `kkt_block_sq` is `‖∇f_m(x_m) + λ̂‖²`.
pub fn multiblock_kkt(rp: &ReformulatedProblem, x: &[f64], xm: &[f64], centers: Option<KktCenters<'_>>) -> Result<StationarityReport> {
    ensure_dim(rp.total_dim(), x.len())?;
    ensure_dim(rp.constraint_rows(), xm.len())?;
    let n = rp.constraint_rows();
    let mut gm = vec![0.0; n];
    rp.last_oracle().gradient(xm, &mut gm);
    let mut lambda: Vec<f64> = gm.iter().map(|v| -v).collect();
    if let Some(c) = centers {
        ensure_dim(n, c.center_m.len())?;
        for j in 0..n {
            lambda[j] -= 2.0 * c.mu * (xm[j] - c.center_m[j]);
        }
    }
    let last_sq: f64 = gm.iter().zip(&lambda).map(|(a, b)| (a + b) * (a + b)).sum();

    let mut at_lambda = vec![0.0; rp.total_dim()];
    rp.apply_transpose(&lambda, &mut at_lambda);
    let mut grad_sq = 0.0;
    let mut ncone_sq = 0.0;
    for i in 0..rp.num_primal_blocks() {
        let r = rp.block_range(i);
        let xi = &x[r.clone()];
        let set = rp.block_set(i);
        let violation = set.violation(xi);
        if violation > SET_TOLERANCE {
            return Err(Error::OutsideSet(violation));
        }
        let mut gi = vec![0.0; xi.len()];
        rp.block_oracle(i).gradient(xi, &mut gi);
        for (g, a) in gi.iter_mut().zip(&at_lambda[r]) {
            *g += a;
        }
        grad_sq += linalg::norm_sq(&gi);
        ncone_sq += ncone_unchecked(&gi, set, xi, 0);
    }
    Ok(StationarityReport {
        grad_norm_sq: grad_sq,
        ncone_dist_sq: ncone_sq,
        strong_gap: None,
        feasibility_sq: Some(rp.feasibility_sq(x, xm)),
        kkt_block_sq: Some(last_sq),
    })
}
