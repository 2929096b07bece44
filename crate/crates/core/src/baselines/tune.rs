//! Inner-iteration tuning: short RapGrad runs with `s · factor`, keep the best.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::FiniteSumProblem;
use crate::rapgrad::{rapgrad_run, RapGradConfig};

pub const DEFAULT_FACTORS: [f64; 3] = [1.0, 0.1, 0.01];
pub const DEFAULT_BUDGET_PASSES: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneEntry {
    pub factor: f64,
    pub s: usize,
    pub final_grad_norm_sq: f64,
    pub final_pass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best_factor: f64,
    pub entries: Vec<TuneEntry>,
}

/// Runs RapGrad for each factor with a pass budget and returns the factor
/// with the smallest final recorded stationarity measure (first on ties).
pub fn tune_inner_iterations(p: &FiniteSumProblem, base: &RapGradConfig, factors: &[f64], budget_passes: f64) -> Result<TuneResult> {
    if factors.is_empty() {
        return Err(Error::InvalidParameter("at least one factor is required".into()));
    }
    if !(budget_passes > 0.0 && budget_passes.is_finite()) {
        return Err(Error::InvalidParameter(format!("budget must be positive, got {budget_passes}")));
    }
    let mut entries = Vec::with_capacity(factors.len());
    for &factor in factors {
        let mut cfg = base.clone();
        cfg.s_factor = factor;
        cfg.s_override = None;
        cfg.k = usize::MAX;
        cfg.monitor.max_passes = budget_passes;
        cfg.monitor.stop_tol = None;
        let out = rapgrad_run(p, &cfg)?;
        let last = out.record.final_row().expect("runs record at least one row");
        entries.push(TuneEntry {
            factor,
            s: out.s,
            final_grad_norm_sq: last.grad_norm_sq,
            final_pass: last.pass,
        });
    }
    let best = entries
        .iter()
        .min_by(|a, b| a.final_grad_norm_sq.total_cmp(&b.final_grad_norm_sq))
        .unwrap();
    Ok(TuneResult {
        best_factor: best.factor,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_scad_ls, GenSpec};

    fn instance() -> FiniteSumProblem {
        gen_scad_ls(&GenSpec::scad_ls(30, 6, 4)).unwrap().problem
    }

    #[test]
    fn single_factor_is_returned() {
        let r = tune_inner_iterations(&instance(), &RapGradConfig::default(), &[0.3], 5.0).unwrap();
        assert_eq!(r.best_factor, 0.3);
        assert_eq!(r.entries.len(), 1);
    }

    #[test]
    fn selection_is_argmin_and_deterministic() {
        let p = instance();
        let cfg = RapGradConfig {
            seed: 3,
            ..Default::default()
        };
        let a = tune_inner_iterations(&p, &cfg, &[1.0, 0.1], 20.0).unwrap();
        let b = tune_inner_iterations(&p, &cfg, &[1.0, 0.1], 20.0).unwrap();
        assert_eq!(a, b);
        let best = a.entries.iter().find(|e| e.factor == a.best_factor).unwrap();
        assert!(a.entries.iter().all(|e| best.final_grad_norm_sq <= e.final_grad_norm_sq));
        assert!(a.entries.iter().all(|e| e.final_pass >= 20.0));
    }

    #[test]
    fn empty_factor_list_rejected() {
        assert!(tune_inner_iterations(&instance(), &RapGradConfig::default(), &[], 5.0).is_err());
    }
}
