//! Cyclic linearized proximal ADMM on `Σ f_i(x_i) + f_m(x_m)` s.t. `𝐀x + x_m = 𝐛`.
//!
//! Block `i` minimizes `f_i(u) + ⟨𝐀_iᵀ(λ + ρr), u⟩ + ((ρ‖𝐀_i‖² + μ)/2)‖u − x_i‖²`
//! with `r = 𝐀x + x_m − 𝐛`; the last block is an exact prox with an extra
//! `(μ/2)‖x_m − x_m^old‖²` term; then `λ ← λ + ρ(𝐀x + x_m − 𝐛)`.

use std::collections::BTreeMap;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{ensure_dim, Error, Result};
use crate::linalg;
use crate::metrics::{self, Monitor, MonitorOptions, RunRecord, StopReason};
use crate::problems::{reformulate, Counters, FeasibleSet, MultiBlockProblem, ReformulatedProblem};
use crate::rapdual::{BlockProx, DefaultBlockProx};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmConfig {
    /// Penalty; `L²` when absent.
    pub rho: Option<f64>,
    pub max_cycles: Option<usize>,
    pub seed: u64,
    pub monitor: MonitorOptions,
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct AdmmOutput {
    pub x: Vec<f64>,
    pub xm: Vec<f64>,
    pub lambda: Vec<f64>,
    pub record: RunRecord,
    pub rho: f64,
    pub cycles: usize,
}

fn measure(rp: &ReformulatedProblem, x: &[f64], xm: &[f64]) -> Result<(f64, f64, f64)> {
    let r = metrics::multiblock_kkt(rp, x, xm, None)?;
    Ok((rp.objective(x, xm), r.ncone_dist_sq, r.feasibility_sq.unwrap_or(0.0)))
}

pub fn run_admm(p: &MultiBlockProblem, cfg: &AdmmConfig) -> Result<AdmmOutput> {
    let rp = reformulate(p)?;
    run_admm_reformulated(&rp, cfg, &DefaultBlockProx::default())
}

pub fn run_admm_reformulated(rp: &ReformulatedProblem, cfg: &AdmmConfig, prox: &dyn BlockProx) -> Result<AdmmOutput> {
    let lip = rp.original().lipschitz();
    let mu = rp.original().lower_curvature();
    let rho = cfg.rho.unwrap_or(lip * lip);
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParameter(format!("penalty must be positive, got {rho}")));
    }
    if cfg.max_cycles.is_none() && !cfg.monitor.max_passes.is_finite() {
        return Err(Error::InvalidParameter("ADMM needs a pass budget or a cycle limit".into()));
    }
    let blocks = rp.num_primal_blocks();
    let n = rp.constraint_rows();
    let dim = rp.total_dim();
    let mut x = match &cfg.x0 {
        Some(v) => {
            ensure_dim(dim, v.len())?;
            v.clone()
        }
        None => vec![0.0; dim],
    };
    rp.project_blocks(&mut x);
    let mut ax = vec![0.0; n];
    rp.apply(&x, &mut ax);
    let mut xm: Vec<f64> = rp.rhs().iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut lambda = vec![0.0; n];
    let mut resid = vec![0.0; n];
    let mut lin_full = vec![0.0; n];
    let mut lin = vec![0.0; dim];
    let mut center = vec![0.0; n];
    let mut delta = vec![0.0; n];

    let mut counters = Counters::default();
    let mut monitor = Monitor::new(cfg.monitor, blocks as u64);
    let mut stop = None;
    let (obj, d, feas) = measure(rp, &x, &xm)?;
    if let ControlFlow::Break(r) = monitor.record(0, obj, d, Some(feas)) {
        stop = Some(r);
    }
    let mut cycles = 0;
    'cycles: while stop.is_none() && cfg.max_cycles.is_none_or(|c| cycles < c) {
        for i in 0..blocks {
            let range = rp.block_range(i);
            let a = rp.coupling(i);
            for j in 0..n {
                resid[j] = ax[j] + xm[j] - rp.rhs()[j];
                lin_full[j] = lambda[j] + rho * resid[j];
            }
            let li = &mut lin[range.clone()];
            linalg::mat_t_vec(a, &lin_full, li);
            let norm = rp.block_norms()[i];
            let quad = rho * norm * norm + mu;
            let old = x[range.clone()].to_vec();
            prox.prox(rp.block_oracle(i), rp.block_set(i), li, quad, &old, &mut x[range.clone()])?;
            let step: Vec<f64> = x[range.clone()].iter().zip(&old).map(|(a, b)| a - b).collect();
            linalg::mat_vec(a, &step, &mut delta);
            linalg::axpy(1.0, &delta, &mut ax);
            counters.block_updates += 1;
            if monitor.due(counters.block_updates) {
                let (obj, d, feas) = measure(rp, &x, &xm)?;
                if let ControlFlow::Break(r) = monitor.record(counters.block_updates, obj, d, Some(feas)) {
                    stop = Some(r);
                    break 'cycles;
                }
            }
        }
        let q = rho + mu;
        for j in 0..n {
            center[j] = (rho * (rp.rhs()[j] - ax[j]) + mu * xm[j]) / q;
        }
        let old = center.clone();
        prox.prox(rp.last_oracle(), &FeasibleSet::WholeSpace, &lambda, q, &old, &mut xm)?;
        counters.block_updates += 1;
        rp.apply(&x, &mut ax);
        for j in 0..n {
            lambda[j] += rho * (ax[j] + xm[j] - rp.rhs()[j]);
        }
        cycles += 1;
        if monitor.due(counters.block_updates) {
            let (obj, d, feas) = measure(rp, &x, &xm)?;
            if let ControlFlow::Break(r) = monitor.record(counters.block_updates, obj, d, Some(feas)) {
                stop = Some(r);
            }
        }
    }
    if monitor.rows().last().is_none_or(|r| r.work != counters.block_updates) {
        let (obj, d, feas) = measure(rp, &x, &xm)?;
        let _ = monitor.record(counters.block_updates, obj, d, Some(feas));
    }

    let mut metadata = BTreeMap::new();
    metadata.insert("rho".into(), json!(rho));
    metadata.insert("cycles".into(), json!(cycles));
    metadata.insert("block_updates_per_cycle".into(), json!(blocks + 1));
    metadata.insert(
        "scheme".into(),
        json!("generic cyclic linearized proximal ADMM on the reformulated problem; not a reproduction of a specific published variant"),
    );
    let record = RunRecord {
        method: "admm".into(),
        seed: cfg.seed,
        rows: monitor.into_rows(),
        counters,
        pass_unit: blocks as u64,
        stop_reason: stop.unwrap_or(StopReason::Completed),
        config: serde_json::to_value(cfg)?,
        metadata,
    };
    Ok(AdmmOutput {
        x,
        xm,
        lambda,
        record,
        rho,
        cycles,
    })
}
