//! RapGrad: proximal-point outer loop driving RaGrad.

use std::collections::BTreeMap;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{ensure_dim, Error, Result};
use crate::linalg;
use crate::metrics::{self, Monitor, MonitorOptions, RunRecord, StopReason};
use crate::problems::{Counters, FiniteSumProblem};
use crate::rng::SeededRng;

use super::ragrad::{averaged_psi_grad, component_psi_grad, ragrad_step, RaGradState, RaGradWork};
use super::schedule::{compute_ragrad_schedule_with, InnerConstant, RaGradSchedule};

/// Relative tolerance of the ȳ-invariant check.
pub const INVARIANT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputRule {
    /// `ℓ̂` uniform over the completed outer iterations.
    #[default]
    UniformRandom,
    /// The outer iterate with the smallest stationarity measure.
    BestByMetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// One randomly chosen component per inner iteration.
    #[default]
    Randomized,
    /// The averaged function as a single component; `m` evaluations per
    /// inner iteration.
    Batch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RapGradConfig {
    pub k: usize,
    /// Explicit inner iteration count; takes precedence over `s_factor`.
    pub s_override: Option<usize>,
    /// Multiplies the theoretical `s` (floored at 1).
    pub s_factor: f64,
    pub seed: u64,
    pub output_rule: OutputRule,
    pub mode: Mode,
    pub inner_constant: InnerConstant,
    pub monitor: MonitorOptions,
    /// Starting point `x̄⁰`; zeros projected onto `X` when absent.
    pub x0: Option<Vec<f64>>,
    pub verify_invariant: bool,
}

impl Default for RapGradConfig {
    fn default() -> Self {
        Self {
            k: 10,
            s_override: None,
            s_factor: 1.0,
            seed: 0,
            output_rule: OutputRule::UniformRandom,
            mode: Mode::Randomized,
            inner_constant: InnerConstant::Theorem,
            monitor: MonitorOptions::default(),
            x0: None,
            verify_invariant: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RapGradOutput {
    pub x: Vec<f64>,
    /// `ℓ̂` (1-based) when the output is an outer iterate.
    pub selected: Option<usize>,
    pub record: RunRecord,
    pub schedule: RaGradSchedule,
    pub s: usize,
    pub outer_completed: usize,
    /// `x̄⁰, …, x̄^{outer_completed}`.
    pub outer_iterates: Vec<Vec<f64>>,
    /// Largest relative ȳ-invariant residual observed.
    pub invariant_max: f64,
    /// Largest relative drift of the running y-sum observed.
    pub sum_drift_max: f64,
}

impl RapGradOutput {
    /// Proximal center of the subproblem that produced the output, if the
    /// output is an outer iterate.
    pub fn output_center(&self) -> Option<&[f64]> {
        self.selected.map(|l| self.outer_iterates[l - 1].as_slice())
    }
}

fn measure(p: &FiniteSumProblem, x: &[f64], g: &mut [f64]) -> Result<(f64, f64)> {
    p.gradient_unchecked(x, g);
    let d = metrics::ncone_distance_sq(g, p.set(), x)?;
    Ok((p.objective_unchecked(x), d))
}

pub fn rapgrad_run(p: &FiniteSumProblem, cfg: &RapGradConfig) -> Result<RapGradOutput> {
    if cfg.k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if !(cfg.s_factor > 0.0 && cfg.s_factor.is_finite()) {
        return Err(Error::InvalidParameter(format!("s factor must be positive, got {}", cfg.s_factor)));
    }
    if cfg.s_override == Some(0) {
        return Err(Error::InvalidParameter("s override must be positive".into()));
    }
    let m = p.num_components();
    let n = p.dim();
    let mu = p.lower_curvature();
    let (units, cost) = match cfg.mode {
        Mode::Randomized => (m, 1u64),
        Mode::Batch => (1, m as u64),
    };
    let schedule = compute_ragrad_schedule_with(units, p.lipschitz(), mu, cfg.inner_constant)?;
    let s = cfg.s_override.unwrap_or_else(|| schedule.scaled_s(cfg.s_factor));

    let x0 = match &cfg.x0 {
        Some(v) => {
            ensure_dim(n, v.len())?;
            p.set().project(v)?
        }
        None => p.set().project(&vec![0.0; n])?,
    };

    let mut root = SeededRng::new(cfg.seed);
    let mut inner_rng = root.fork(1);
    let mut output_rng = root.fork(2);
    let mut check_rng = root.fork(3);

    let mut counters = Counters::default();
    let mut monitor = Monitor::new(cfg.monitor, m as u64);
    let mut gbuf = vec![0.0; n];
    let mut scratch = vec![0.0; n];

    // x̲̄_i = x̄⁰, ȳ_i = ∇f_i(x̄⁰): the only full pass.
    let mut xunder_bar: Vec<f64> = x0.iter().copied().cycle().take(units * n).collect();
    let mut y_bar = vec![0.0; units * n];
    match cfg.mode {
        Mode::Randomized => {
            for i in 0..m {
                p.component(i).gradient(&x0, &mut y_bar[i * n..(i + 1) * n]);
            }
        }
        Mode::Batch => averaged_psi_grad(p, &x0, &x0, 0.0, &mut y_bar, &mut scratch),
    }
    counters.gradient_evals += m as u64;

    let mut outer_iterates = vec![x0.clone()];
    let mut outer_metric = vec![f64::INFINITY];
    let mut stop: Option<StopReason> = None;
    let mut stop_point: Option<Vec<f64>> = None;
    let mut invariant_max = 0.0f64;
    let mut sum_drift_max = 0.0f64;

    let (obj0, d0) = measure(p, &x0, &mut gbuf)?;
    if let ControlFlow::Break(r) = monitor.record(counters.gradient_evals, obj0, d0, None) {
        stop = Some(r);
        stop_point = Some(x0.clone());
    }

    let mut work = RaGradWork::new(n);
    let mut outer_completed = 0;
    'outer: for _ell in 1..=cfg.k {
        if stop.is_some() {
            break;
        }
        let z = outer_iterates.last().unwrap().clone();
        let mut state = RaGradState::new(z.clone(), z.clone(), xunder_bar.clone(), y_bar.clone())?;
        let mut psi = |i: usize, x: &[f64], out: &mut [f64]| match cfg.mode {
            Mode::Randomized => component_psi_grad(p, i, x, &z, mu, out),
            Mode::Batch => averaged_psi_grad(p, x, &z, mu, out, &mut scratch),
        };
        for _ in 0..s {
            ragrad_step(&mut state, &schedule, &mut psi, p.set(), &mut inner_rng, &mut work);
            counters.gradient_evals += cost;
            if monitor.due(counters.gradient_evals) {
                let (obj, d) = measure(p, &state.x_cur, &mut gbuf)?;
                if let ControlFlow::Break(r) = monitor.record(counters.gradient_evals, obj, d, None) {
                    stop = Some(r);
                    stop_point = Some(state.x_cur.clone());
                    break 'outer;
                }
            }
        }
        sum_drift_max = sum_drift_max.max(state.sum_drift());

        // x̄^ℓ = x^s, x̲̄ = x̲^s, ȳ_i = y_i^s + 2μ(x̄^{ℓ−1} − x̄^ℓ).
        let x_new = state.x_cur.clone();
        xunder_bar = state.xunder;
        y_bar = state.y;
        for i in 0..units {
            for j in 0..n {
                y_bar[i * n + j] += 2.0 * mu * (z[j] - x_new[j]);
            }
        }
        if cfg.verify_invariant {
            let probes = units.min(4);
            for _ in 0..probes {
                let i = check_rng.index(units);
                let xu = &xunder_bar[i * n..(i + 1) * n];
                match cfg.mode {
                    Mode::Randomized => component_psi_grad(p, i, xu, &x_new, mu, &mut gbuf),
                    Mode::Batch => averaged_psi_grad(p, xu, &x_new, mu, &mut gbuf, &mut scratch),
                }
                let yi = &y_bar[i * n..(i + 1) * n];
                let rel = linalg::dist_sq(&gbuf, yi).sqrt() / (1.0 + linalg::norm(yi));
                invariant_max = invariant_max.max(rel);
                if rel > INVARIANT_TOL {
                    return Err(Error::InvariantViolation(format!(
                        "ȳ-invariant residual {rel:e} for component {i}"
                    )));
                }
            }
        }
        if cfg.output_rule == OutputRule::BestByMetric {
            outer_metric.push(measure(p, &x_new, &mut gbuf)?.1);
        }
        outer_iterates.push(x_new);
        outer_completed += 1;
    }

    let (x, selected) = match (stop, stop_point) {
        (Some(StopReason::Tolerance), Some(pt)) => (pt, None),
        (_, pt) if outer_completed == 0 => (pt.unwrap_or(x0), None),
        _ => {
            let l = match cfg.output_rule {
                OutputRule::UniformRandom => 1 + output_rng.index(outer_completed),
                OutputRule::BestByMetric => (1..=outer_completed)
                    .min_by(|&a, &b| outer_metric[a].total_cmp(&outer_metric[b]))
                    .unwrap(),
            };
            (outer_iterates[l].clone(), Some(l))
        }
    };
    let last = outer_iterates.last().unwrap();
    if stop.is_none() && monitor.rows().last().is_none_or(|r| r.work != counters.gradient_evals) {
        let (obj, d) = measure(p, last, &mut gbuf)?;
        let _ = monitor.record(counters.gradient_evals, obj, d, None);
    }

    let mut metadata = BTreeMap::new();
    metadata.insert("x0".into(), json!(if cfg.x0.is_some() { "user" } else { "zeros-projected" }));
    metadata.insert("s".into(), json!(s));
    metadata.insert("schedule".into(), serde_json::to_value(schedule)?);
    metadata.insert("outer_completed".into(), json!(outer_completed));
    metadata.insert("selected".into(), json!(selected));
    metadata.insert("invariant_max".into(), json!(invariant_max));
    if cfg.output_rule == OutputRule::BestByMetric {
        metadata.insert("deviation".into(), json!("output chosen by smallest stationarity measure instead of uniformly at random"));
    }
    let record = RunRecord {
        method: match cfg.mode {
            Mode::Randomized => "rapgrad".into(),
            Mode::Batch => "batch-rapgrad".into(),
        },
        seed: cfg.seed,
        rows: monitor.into_rows(),
        counters,
        pass_unit: m as u64,
        stop_reason: stop.unwrap_or(StopReason::Completed),
        config: serde_json::to_value(cfg)?,
        metadata,
    };
    Ok(RapGradOutput {
        x,
        selected,
        record,
        schedule,
        s,
        outer_completed,
        outer_iterates,
        invariant_max,
        sum_drift_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scad::{build_scad_ls, ScadParams};

    fn small_problem(seed: u64, m: usize, n: usize) -> FiniteSumProblem {
        let mut rng = SeededRng::new(seed);
        let rows: Vec<f64> = (0..m * n).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.normal()).collect();
        build_scad_ls(rows, m, n, b, ScadParams::default().with_rho(1.0)).unwrap()
    }

    #[test]
    fn degenerate_run() {
        let p = small_problem(1, 5, 3);
        let cfg = RapGradConfig {
            k: 1,
            s_override: Some(1),
            ..Default::default()
        };
        let out = rapgrad_run(&p, &cfg).unwrap();
        assert_eq!(out.record.counters.gradient_evals, 5 + 1);
        assert_eq!(out.record.rows[0].pass, 1.0);
    }

    #[test]
    fn gradient_accounting() {
        let p = small_problem(2, 6, 3);
        for k in [1, 3, 7] {
            let cfg = RapGradConfig {
                k,
                s_override: Some(13),
                ..Default::default()
            };
            let out = rapgrad_run(&p, &cfg).unwrap();
            assert_eq!(out.record.counters.gradient_evals, 6 + k as u64 * 13);
            assert!(out.record.pass_column_consistent());
            assert!(out.invariant_max <= INVARIANT_TOL);
        }
    }

    #[test]
    fn batch_matches_randomized_for_one_component() {
        let p = small_problem(3, 1, 4);
        let base = RapGradConfig {
            k: 3,
            s_factor: 0.5,
            seed: 9,
            ..Default::default()
        };
        let a = rapgrad_run(&p, &base).unwrap();
        let b = rapgrad_run(&p, &RapGradConfig { mode: Mode::Batch, ..base }).unwrap();
        assert_eq!(a.outer_iterates, b.outer_iterates);
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn seed_determinism() {
        let p = small_problem(4, 8, 3);
        let cfg = RapGradConfig {
            k: 2,
            s_factor: 0.1,
            seed: 5,
            ..Default::default()
        };
        let a = rapgrad_run(&p, &cfg).unwrap();
        let b = rapgrad_run(&p, &cfg).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.selected, b.selected);
    }

    #[test]
    fn stops_on_budget() {
        let p = small_problem(5, 10, 3);
        let cfg = RapGradConfig {
            k: 1000,
            monitor: MonitorOptions {
                record_every: 0.5,
                stop_tol: None,
                max_passes: 4.0,
            },
            ..Default::default()
        };
        let out = rapgrad_run(&p, &cfg).unwrap();
        assert_eq!(out.record.stop_reason, StopReason::PassBudget);
        assert_eq!(out.record.rows.last().unwrap().pass, 4.0);
    }
}
