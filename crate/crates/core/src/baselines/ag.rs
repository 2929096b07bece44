//! Nonconvex accelerated gradient with full gradients.
//!
//! `x^md = (1 − α_k) x^ag + α_k x`, `x ← P(x − λ_k ∇f(x^md))`,
//! `x^ag ← P(x^md − β ∇f(x^md))` with `α_k = w·2/(k+1)`, `β = 1/(2L)`,
//! `λ_k = kβ/2`. The weight `w = 0` gives projected gradient descent on `x^ag`.

use std::collections::BTreeMap;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::metrics::{Monitor, MonitorOptions, RunRecord, StopReason};
use crate::problems::{Counters, FiniteSumProblem};

use super::{initial_point, measure_finite_sum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgConfig {
    /// Scales the momentum sequence `α_k`.
    pub momentum: f64,
    /// `β`; `1/(2L)` when absent.
    pub step: Option<f64>,
    pub max_iter: Option<usize>,
    pub seed: u64,
    pub monitor: MonitorOptions,
    pub x0: Option<Vec<f64>>,
}

impl Default for AgConfig {
    fn default() -> Self {
        Self {
            momentum: 1.0,
            step: None,
            max_iter: None,
            seed: 0,
            monitor: MonitorOptions::default(),
            x0: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AgOutput {
    pub x: Vec<f64>,
    pub record: RunRecord,
    pub step: f64,
    pub iterations: usize,
}

pub fn run_ag(p: &FiniteSumProblem, cfg: &AgConfig) -> Result<AgOutput> {
    let m = p.num_components();
    let n = p.dim();
    let beta = cfg.step.unwrap_or(0.5 / p.lipschitz());
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {beta}")));
    }
    if !(0.0..=1.0).contains(&cfg.momentum) {
        return Err(Error::InvalidParameter(format!("momentum weight must lie in [0, 1], got {}", cfg.momentum)));
    }
    if cfg.max_iter.is_none() && !cfg.monitor.max_passes.is_finite() {
        return Err(Error::InvalidParameter("AG needs a pass budget or an iteration limit".into()));
    }
    let mut x = initial_point(p.set(), n, cfg.x0.as_deref())?;
    let mut xag = x.clone();
    let mut md = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut gbuf = vec![0.0; n];
    let mut counters = Counters::default();
    let mut monitor = Monitor::new(cfg.monitor, m as u64);
    let mut stop = None;
    let (obj, d) = measure_finite_sum(p, &xag, &mut gbuf)?;
    if let ControlFlow::Break(r) = monitor.record(0, obj, d, None) {
        stop = Some(r);
    }
    let mut k = 0;
    while stop.is_none() && cfg.max_iter.is_none_or(|t| k < t) {
        k += 1;
        let alpha = cfg.momentum * 2.0 / (k as f64 + 1.0);
        let lambda = k as f64 * beta / 2.0;
        for j in 0..n {
            md[j] = (1.0 - alpha) * xag[j] + alpha * x[j];
        }
        p.gradient_unchecked(&md, &mut g);
        counters.gradient_evals += m as u64;
        for j in 0..n {
            x[j] -= lambda * g[j];
            xag[j] = md[j] - beta * g[j];
        }
        p.set().project_in_place(&mut x);
        p.set().project_in_place(&mut xag);
        if monitor.due(counters.gradient_evals) {
            let (obj, d) = measure_finite_sum(p, &xag, &mut gbuf)?;
            if let ControlFlow::Break(r) = monitor.record(counters.gradient_evals, obj, d, None) {
                stop = Some(r);
            }
        }
    }
    if monitor.rows().last().is_none_or(|r| r.work != counters.gradient_evals) {
        let (obj, d) = measure_finite_sum(p, &xag, &mut gbuf)?;
        let _ = monitor.record(counters.gradient_evals, obj, d, None);
    }

    let mut metadata = BTreeMap::new();
    metadata.insert("beta".into(), json!(beta));
    metadata.insert("momentum".into(), json!(cfg.momentum));
    metadata.insert("iterations".into(), json!(k));
    metadata.insert(
        "defaults".into(),
        json!("alpha_k = 2/(k+1), beta = 1/(2L), lambda_k = k beta / 2 unless overridden; output is x^ag"),
    );
    let record = RunRecord {
        method: "ag".into(),
        seed: cfg.seed,
        rows: monitor.into_rows(),
        counters,
        pass_unit: m as u64,
        stop_reason: stop.unwrap_or(StopReason::Completed),
        config: serde_json::to_value(cfg)?,
        metadata,
    };
    Ok(AgOutput {
        x: xag,
        record,
        step: beta,
        iterations: k,
    })
}
