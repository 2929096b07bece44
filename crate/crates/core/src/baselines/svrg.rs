//! Nonconvex SVRG with projection.

use std::collections::BTreeMap;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{ensure_dim, Error, Result};
use crate::metrics::{Monitor, MonitorOptions, RunRecord, StopReason};
use crate::problems::{Counters, FiniteSumProblem};
use crate::rng::SeededRng;

use super::{initial_point, measure_finite_sum};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvrgConfig {
    /// Inner steps per epoch; `m` when absent.
    pub epoch_length: Option<usize>,
    /// Step size; `1/(3 L m^{2/3})` when absent.
    pub step: Option<f64>,
    pub max_epochs: Option<usize>,
    pub seed: u64,
    pub monitor: MonitorOptions,
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SvrgOutput {
    pub x: Vec<f64>,
    pub record: RunRecord,
    pub step: f64,
    pub epoch_length: usize,
    pub epochs: usize,
}

/// `∇f_i(x) − ∇f_i(anchor) + full`, exact at `x = anchor`.
pub fn svrg_direction(gi_x: &[f64], gi_anchor: &[f64], full: &[f64], out: &mut [f64]) {
    for j in 0..out.len() {
        out[j] = (gi_x[j] - gi_anchor[j]) + full[j];
    }
}

pub fn default_svrg_step(lipschitz: f64, m: usize) -> f64 {
    1.0 / (3.0 * lipschitz * (m as f64).powf(2.0 / 3.0))
}

pub fn run_svrg(p: &FiniteSumProblem, cfg: &SvrgConfig) -> Result<SvrgOutput> {
    let m = p.num_components();
    let n = p.dim();
    let epoch_length = cfg.epoch_length.unwrap_or(m);
    let step = cfg.step.unwrap_or_else(|| default_svrg_step(p.lipschitz(), m));
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
    }
    if cfg.max_epochs.is_none() && !cfg.monitor.max_passes.is_finite() {
        return Err(Error::InvalidParameter("SVRG needs a pass budget or an epoch limit".into()));
    }
    let mut x = initial_point(p.set(), n, cfg.x0.as_deref())?;
    if let Some(v) = &cfg.x0 {
        ensure_dim(n, v.len())?;
    }
    let mut rng = SeededRng::new(cfg.seed).fork(1);
    let mut counters = Counters::default();
    let mut monitor = Monitor::new(cfg.monitor, m as u64);
    let mut full = vec![0.0; n];
    let mut gi_x = vec![0.0; n];
    let mut gi_a = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut gbuf = vec![0.0; n];
    let mut stop = None;
    let mut epochs = 0;

    'epochs: while cfg.max_epochs.is_none_or(|e| epochs < e) {
        let anchor = x.clone();
        p.gradient_unchecked(&anchor, &mut full);
        counters.gradient_evals += m as u64;
        epochs += 1;
        if monitor.due(counters.gradient_evals) {
            let (obj, d) = measure_finite_sum(p, &x, &mut gbuf)?;
            if let ControlFlow::Break(r) = monitor.record(counters.gradient_evals, obj, d, None) {
                stop = Some(r);
                break 'epochs;
            }
        }
        for _ in 0..epoch_length {
            let i = rng.index(m);
            let f = p.component(i);
            f.gradient(&x, &mut gi_x);
            f.gradient(&anchor, &mut gi_a);
            svrg_direction(&gi_x, &gi_a, &full, &mut dir);
            counters.gradient_evals += 2;
            for j in 0..n {
                x[j] -= step * dir[j];
            }
            p.set().project_in_place(&mut x);
            if monitor.due(counters.gradient_evals) {
                let (obj, d) = measure_finite_sum(p, &x, &mut gbuf)?;
                if let ControlFlow::Break(r) = monitor.record(counters.gradient_evals, obj, d, None) {
                    stop = Some(r);
                    break 'epochs;
                }
            }
        }
    }
    if monitor.rows().last().is_none_or(|r| r.work != counters.gradient_evals) {
        let (obj, d) = measure_finite_sum(p, &x, &mut gbuf)?;
        let _ = monitor.record(counters.gradient_evals, obj, d, None);
    }

    let mut metadata = BTreeMap::new();
    metadata.insert("step".into(), json!(step));
    metadata.insert("epoch_length".into(), json!(epoch_length));
    metadata.insert("epochs".into(), json!(epochs));
    metadata.insert("gradient_evals_per_inner_step".into(), json!(2));
    metadata.insert(
        "defaults".into(),
        json!("epoch length m and step 1/(3 L m^(2/3)) unless overridden; output is the last iterate"),
    );
    let record = RunRecord {
        method: "svrg".into(),
        seed: cfg.seed,
        rows: monitor.into_rows(),
        counters,
        pass_unit: m as u64,
        stop_reason: stop.unwrap_or(StopReason::Completed),
        config: serde_json::to_value(cfg)?,
        metadata,
    };
    Ok(SvrgOutput {
        x,
        record,
        step,
        epoch_length,
        epochs,
    })
}
