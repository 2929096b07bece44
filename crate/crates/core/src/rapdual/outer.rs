//! RapDual: proximal-point outer loop driving RaDual.

use std::collections::BTreeMap;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{ensure_dim, Error, Result};
use crate::metrics::{self, Monitor, MonitorOptions, RunRecord, StopReason};
use crate::problems::{reformulate, Counters, MultiBlockProblem, ReformulatedProblem};
use crate::rng::SeededRng;

use super::prox::{BlockProx, DefaultBlockProx};
use super::radual::{finish, radual_step, stationarity_residual, BlockSelection, RaDualState, RaDualWork};
use super::schedule::{compute_radual_schedule_with, DualConstant, RaDualSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualOutputRule {
    #[default]
    UniformRandom,
    /// The outer iterate with the smallest feasibility residual.
    BestByFeasibility,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualMode {
    #[default]
    Randomized,
    /// Every block per iteration, schedule built for two blocks with `‖𝐀‖`.
    Batch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RapDualConfig {
    pub k: usize,
    pub s_override: Option<usize>,
    pub s_factor: f64,
    pub seed: u64,
    pub output_rule: DualOutputRule,
    pub mode: DualMode,
    pub inner_constant: DualConstant,
    pub monitor: MonitorOptions,
    /// Stacked starting blocks; zeros projected onto each `X_i` when absent.
    pub x0: Option<Vec<f64>>,
}

impl Default for RapDualConfig {
    fn default() -> Self {
        Self {
            k: 10,
            s_override: None,
            s_factor: 1.0,
            seed: 0,
            output_rule: DualOutputRule::UniformRandom,
            mode: DualMode::Randomized,
            inner_constant: DualConstant::Theorem,
            monitor: MonitorOptions::default(),
            x0: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RapDualOutput {
    pub x: Vec<f64>,
    pub xm: Vec<f64>,
    pub selected: Option<usize>,
    pub record: RunRecord,
    pub schedule: RaDualSchedule,
    pub s: usize,
    pub outer_completed: usize,
    /// `(x̄^ℓ, x̄_m^ℓ)` for `ℓ = 0, …, outer_completed`.
    pub outer_iterates: Vec<(Vec<f64>, Vec<f64>)>,
    pub initial_feasibility_sq: f64,
    /// Largest relative stationarity residual of `x_m^s = −g^s`.
    pub stationarity_max: f64,
}

/// Schedule used by the given mode: `(m, Ā)` for randomized, `(2, ‖𝐀‖)` for
/// batch.
pub fn schedule_for(rp: &ReformulatedProblem, mode: DualMode, constant: DualConstant) -> Result<RaDualSchedule> {
    let p = rp.original();
    let (m, abar) = match mode {
        DualMode::Randomized => (rp.num_primal_blocks() + 1, rp.abar()),
        DualMode::Batch => (2, rp.spectral_norm()),
    };
    compute_radual_schedule_with(m, p.lipschitz(), p.lower_curvature(), abar, constant)
}

fn measure(rp: &ReformulatedProblem, x: &[f64], xm: &[f64]) -> Result<(f64, f64, f64)> {
    let r = metrics::multiblock_kkt(rp, x, xm, None)?;
    Ok((rp.objective(x, xm), r.ncone_dist_sq, r.feasibility_sq.unwrap_or(0.0)))
}

pub fn rapdual_run(p: &MultiBlockProblem, cfg: &RapDualConfig) -> Result<RapDualOutput> {
    let rp = reformulate(p)?;
    rapdual_run_reformulated(&rp, cfg, &DefaultBlockProx::default())
}

pub fn rapdual_run_reformulated(rp: &ReformulatedProblem, cfg: &RapDualConfig, prox: &dyn BlockProx) -> Result<RapDualOutput> {
    if cfg.k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if !(cfg.s_factor > 0.0 && cfg.s_factor.is_finite()) {
        return Err(Error::InvalidParameter(format!("s factor must be positive, got {}", cfg.s_factor)));
    }
    if cfg.s_override == Some(0) {
        return Err(Error::InvalidParameter("s override must be positive".into()));
    }
    let blocks = rp.num_primal_blocks();
    let n = rp.constraint_rows();
    let mu = rp.original().lower_curvature();
    let schedule = schedule_for(rp, cfg.mode, cfg.inner_constant)?;
    let s = cfg.s_override.unwrap_or_else(|| schedule.scaled_s(cfg.s_factor));
    let selection = match cfg.mode {
        DualMode::Randomized => BlockSelection::Random,
        DualMode::Batch => BlockSelection::All,
    };

    let mut x0 = match &cfg.x0 {
        Some(v) => {
            ensure_dim(rp.total_dim(), v.len())?;
            crate::error::ensure_finite(v, "starting point")?;
            v.clone()
        }
        None => vec![0.0; rp.total_dim()],
    };
    rp.project_blocks(&mut x0);
    // x̄_m⁰ = 𝐛 − 𝐀x̄⁰ makes the start exactly feasible.
    let mut ax = vec![0.0; n];
    rp.apply(&x0, &mut ax);
    let xm0: Vec<f64> = rp.rhs().iter().zip(&ax).map(|(b, a)| b - a).collect();
    let initial_feasibility_sq = rp.feasibility_sq(&x0, &xm0);

    let mut root = SeededRng::new(cfg.seed);
    let mut inner_rng = root.fork(1);
    let mut output_rng = root.fork(2);

    let mut monitor = Monitor::new(cfg.monitor, blocks as u64);
    let mut stop = None;
    let mut stop_point = None;
    let (obj0, d0, f0) = measure(rp, &x0, &xm0)?;
    if let ControlFlow::Break(r) = monitor.record(0, obj0, d0, Some(f0)) {
        stop = Some(r);
        stop_point = Some((x0.clone(), xm0.clone()));
    }

    let mut outer_iterates = vec![(x0, xm0)];
    let mut stationarity_max = 0.0f64;
    let mut block_updates = 0u64;
    let mut work = RaDualWork::new(rp);
    let mut outer_completed = 0;
    'outer: for _ell in 1..=cfg.k {
        if stop.is_some() {
            break;
        }
        let (xb, xmb) = outer_iterates.last().unwrap().clone();
        let mut state = RaDualState::new(rp, xb.clone(), &xmb, xb, xmb.clone())?;
        for _ in 0..s {
            radual_step(rp, &mut state, &schedule, prox, selection, &mut inner_rng, &mut work)?;
            let total = block_updates + state.block_updates;
            if monitor.due(total) {
                let xm = state.xm();
                let (obj, d, feas) = measure(rp, &state.x, &xm)?;
                if let ControlFlow::Break(r) = monitor.record(total, obj, d, Some(feas)) {
                    stop = Some(r);
                    stop_point = Some((state.x.clone(), xm));
                    block_updates = total;
                    break 'outer;
                }
            }
        }
        block_updates += state.block_updates;
        stationarity_max = stationarity_max.max(stationarity_residual(rp, &state, mu));
        let xm = finish(rp, &state, mu)?;
        outer_iterates.push((state.x, xm));
        outer_completed += 1;
    }

    let (x, xm, selected) = match (stop, stop_point) {
        (Some(StopReason::Tolerance), Some((x, xm))) => (x, xm, None),
        (_, pt) if outer_completed == 0 => {
            let (x, xm) = pt.unwrap_or_else(|| outer_iterates[0].clone());
            (x, xm, None)
        }
        _ => {
            let l = match cfg.output_rule {
                DualOutputRule::UniformRandom => 1 + output_rng.index(outer_completed),
                DualOutputRule::BestByFeasibility => (1..=outer_completed)
                    .min_by(|&a, &b| {
                        let fa = rp.feasibility_sq(&outer_iterates[a].0, &outer_iterates[a].1);
                        let fb = rp.feasibility_sq(&outer_iterates[b].0, &outer_iterates[b].1);
                        fa.total_cmp(&fb)
                    })
                    .unwrap(),
            };
            (outer_iterates[l].0.clone(), outer_iterates[l].1.clone(), Some(l))
        }
    };
    if stop.is_none() && monitor.rows().last().is_none_or(|r| r.work != block_updates) {
        let (lx, lxm) = outer_iterates.last().unwrap();
        let (obj, d, feas) = measure(rp, lx, lxm)?;
        let _ = monitor.record(block_updates, obj, d, Some(feas));
    }

    let counters = Counters {
        block_updates,
        ..Counters::default()
    };
    let mut metadata = BTreeMap::new();
    metadata.insert("x0".into(), json!(if cfg.x0.is_some() { "user-projected" } else { "zeros-projected" }));
    metadata.insert("s".into(), json!(s));
    metadata.insert("schedule".into(), serde_json::to_value(schedule)?);
    metadata.insert("abar".into(), json!(rp.abar()));
    metadata.insert("spectral_norm".into(), json!(rp.spectral_norm()));
    metadata.insert("anorm2".into(), json!(rp.anorm2()));
    metadata.insert("rcond".into(), json!(rp.rcond()));
    metadata.insert("outer_completed".into(), json!(outer_completed));
    metadata.insert("selected".into(), json!(selected));
    metadata.insert("initial_feasibility_sq".into(), json!(initial_feasibility_sq));
    metadata.insert("stationarity_max".into(), json!(stationarity_max));
    if cfg.output_rule == DualOutputRule::BestByFeasibility {
        metadata.insert("deviation".into(), json!("output chosen by smallest feasibility residual instead of uniformly at random"));
    }
    let record = RunRecord {
        method: match cfg.mode {
            DualMode::Randomized => "rapdual".into(),
            DualMode::Batch => "batch-rapdual".into(),
        },
        seed: cfg.seed,
        rows: monitor.into_rows(),
        counters,
        pass_unit: blocks as u64,
        stop_reason: stop.unwrap_or(StopReason::Completed),
        config: serde_json::to_value(cfg)?,
        metadata,
    };
    Ok(RapDualOutput {
        x,
        xm,
        selected,
        record,
        schedule,
        s,
        outer_completed,
        outer_iterates,
        initial_feasibility_sq,
        stationarity_max,
    })
}
