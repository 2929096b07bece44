//! Comparison methods: SVRG, accelerated gradient, proximal ADMM, and the
//! inner-iteration tuning protocol.

mod admm;
mod ag;
mod svrg;
mod tune;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use admm::{run_admm, run_admm_reformulated, AdmmConfig, AdmmOutput};
pub use ag::{run_ag, AgConfig, AgOutput};
pub use svrg::{default_svrg_step, run_svrg, svrg_direction, SvrgConfig, SvrgOutput};
pub use tune::{tune_inner_iterations, TuneEntry, TuneResult, DEFAULT_BUDGET_PASSES, DEFAULT_FACTORS};

use crate::error::{ensure_dim, Error, Result};
use crate::metrics::{self, MonitorOptions};
use crate::problems::{FeasibleSet, FiniteSumProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMethod {
    Svrg,
    Ag,
    Admm,
    BatchRapgrad,
    BatchRapdual,
}

/// Generic baseline description; `step_params` holds method-specific reals:
/// `step`, `epoch_length` (svrg); `step`, `momentum` (ag); `rho` (admm);
/// `record_every` (all).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    #[serde(default)]
    pub step_params: BTreeMap<String, f64>,
    pub max_passes: f64,
    pub stop_tol: f64,
    #[serde(default)]
    pub seed: u64,
}

impl BaselineConfig {
    pub fn new(method: BaselineMethod) -> Self {
        Self {
            method,
            step_params: BTreeMap::new(),
            max_passes: 3e4,
            stop_tol: 1e-10,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_passes > 0.0) {
            return Err(Error::InvalidParameter(format!("max_passes must be positive, got {}", self.max_passes)));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::InvalidParameter(format!("stop_tol must be nonnegative, got {}", self.stop_tol)));
        }
        let allowed: &[&str] = match self.method {
            BaselineMethod::Svrg => &["step", "epoch_length", "record_every"],
            BaselineMethod::Ag => &["step", "momentum", "record_every"],
            BaselineMethod::Admm => &["rho", "record_every"],
            BaselineMethod::BatchRapgrad | BaselineMethod::BatchRapdual => &["s_factor", "record_every"],
        };
        if let Some(k) = self.step_params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::InvalidParameter(format!("unknown parameter `{k}` for {:?}", self.method)));
        }
        Ok(())
    }

    pub fn monitor(&self) -> MonitorOptions {
        MonitorOptions {
            record_every: self.step_params.get("record_every").copied().unwrap_or(1.0),
            stop_tol: (self.stop_tol > 0.0).then_some(self.stop_tol),
            max_passes: self.max_passes,
        }
    }

    pub fn svrg(&self) -> Result<SvrgConfig> {
        self.expect(BaselineMethod::Svrg)?;
        let epoch_length = match self.step_params.get("epoch_length") {
            Some(&v) if v >= 0.0 && v.fract() == 0.0 => Some(v as usize),
            Some(&v) => return Err(Error::InvalidParameter(format!("epoch_length must be a nonnegative integer, got {v}"))),
            None => None,
        };
        Ok(SvrgConfig {
            epoch_length,
            step: self.step_params.get("step").copied(),
            max_epochs: None,
            seed: self.seed,
            monitor: self.monitor(),
            x0: None,
        })
    }

    pub fn ag(&self) -> Result<AgConfig> {
        self.expect(BaselineMethod::Ag)?;
        Ok(AgConfig {
            momentum: self.step_params.get("momentum").copied().unwrap_or(1.0),
            step: self.step_params.get("step").copied(),
            max_iter: None,
            seed: self.seed,
            monitor: self.monitor(),
            x0: None,
        })
    }

    pub fn admm(&self) -> Result<AdmmConfig> {
        self.expect(BaselineMethod::Admm)?;
        Ok(AdmmConfig {
            rho: self.step_params.get("rho").copied(),
            max_cycles: None,
            seed: self.seed,
            monitor: self.monitor(),
            x0: None,
        })
    }

    fn expect(&self, method: BaselineMethod) -> Result<()> {
        self.validate()?;
        if self.method == method {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("config is for {:?}, not {method:?}", self.method)))
        }
    }
}

pub(crate) fn initial_point(set: &FeasibleSet, n: usize, x0: Option<&[f64]>) -> Result<Vec<f64>> {
    match x0 {
        Some(v) => {
            ensure_dim(n, v.len())?;
            set.project(v)
        }
        None => set.project(&vec![0.0; n]),
    }
}

pub(crate) fn measure_finite_sum(p: &FiniteSumProblem, x: &[f64], g: &mut [f64]) -> Result<(f64, f64)> {
    p.gradient_unchecked(x, g);
    let d = metrics::ncone_distance_sq(g, p.set(), x)?;
    Ok((p.objective_unchecked(x), d))
}
