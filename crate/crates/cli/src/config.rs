//! Experiment configuration file (`--config`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rapopt::rapdual::{DualConstant, DualOutputRule};
use rapopt::rapgrad::{InnerConstant, OutputRule};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Rapgrad,
    BatchRapgrad,
    Rapdual,
    BatchRapdual,
    Svrg,
    Ag,
    Admm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Rapgrad => "rapgrad",
            Self::BatchRapgrad => "batch-rapgrad",
            Self::Rapdual => "rapdual",
            Self::BatchRapdual => "batch-rapdual",
            Self::Svrg => "svrg",
            Self::Ag => "ag",
            Self::Admm => "admm",
        }
    }

    pub fn is_multiblock(self) -> bool {
        matches!(self, Self::Rapdual | Self::BatchRapdual | Self::Admm)
    }
}

/// Outer-loop settings shared by RapGrad and RapDual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxSettings {
    pub k: usize,
    pub s_factor: f64,
    pub s: Option<usize>,
    pub output_rule: Option<String>,
    pub inner_constant: Option<String>,
}

impl Default for ProxSettings {
    fn default() -> Self {
        Self {
            k: 10,
            s_factor: 1.0,
            s: None,
            output_rule: None,
            inner_constant: None,
        }
    }
}

impl ProxSettings {
    pub fn output_rule(&self) -> Result<OutputRule, CliError> {
        parse_enum(self.output_rule.as_deref(), "output_rule")
    }

    pub fn dual_output_rule(&self) -> Result<DualOutputRule, CliError> {
        parse_enum(self.output_rule.as_deref(), "output_rule")
    }

    pub fn inner_constant(&self) -> Result<InnerConstant, CliError> {
        parse_enum(self.inner_constant.as_deref(), "inner_constant")
    }

    pub fn dual_constant(&self) -> Result<DualConstant, CliError> {
        parse_enum(self.inner_constant.as_deref(), "inner_constant")
    }
}

fn parse_enum<T: Default + for<'de> Deserialize<'de>>(v: Option<&str>, field: &str) -> Result<T, CliError> {
    match v {
        None => Ok(T::default()),
        Some(s) => serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| CliError::Usage(format!("unknown {field} `{s}`"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: Option<PathBuf>,
    pub method: Option<Method>,
    pub seeds: Vec<u64>,
    pub stop_tol: f64,
    pub max_passes: f64,
    pub record_every: f64,
    pub out_dir: Option<PathBuf>,
    /// Worker threads across seeds; 0 picks the available parallelism.
    pub threads: usize,
    pub certificate: bool,
    pub prox: ProxSettings,
    /// Method-specific reals for svrg, ag and admm (see the baseline docs).
    pub step_params: BTreeMap<String, f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            instance: None,
            method: None,
            seeds: vec![0],
            stop_tol: 1e-10,
            max_passes: 3e4,
            record_every: 1.0,
            out_dir: None,
            threads: 0,
            certificate: false,
            prox: ProxSettings::default(),
            step_params: BTreeMap::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        // Relative instance paths are resolved against the config file.
        if let (Some(inst), Some(dir)) = (&cfg.instance, path.parent()) {
            if inst.is_relative() {
                cfg.instance = Some(dir.join(inst));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        match &self.instance {
            None => return usage("an instance descriptor is required (--instance or config `instance`)".into()),
            Some(p) if !p.is_file() => return usage(format!("instance {} does not exist", p.display())),
            _ => {}
        }
        if self.method.is_none() {
            return usage("a method is required (--method or config `method`)".into());
        }
        if self.seeds.is_empty() {
            return usage("at least one seed is required".into());
        }
        if !(self.max_passes > 0.0) {
            return usage(format!("max_passes must be positive, got {}", self.max_passes));
        }
        if !(self.stop_tol >= 0.0) {
            return usage(format!("stop_tol must be nonnegative, got {}", self.stop_tol));
        }
        if !(self.record_every >= 0.0 && self.record_every.is_finite()) {
            return usage(format!("record_every must be finite and nonnegative, got {}", self.record_every));
        }
        if self.prox.k == 0 {
            return usage("k must be positive".into());
        }
        if !(self.prox.s_factor > 0.0 && self.prox.s_factor.is_finite()) {
            return usage(format!("s_factor must be positive, got {}", self.prox.s_factor));
        }
        self.prox.output_rule.as_ref().map_or(Ok(()), |_| {
            if self.method.is_some_and(Method::is_multiblock) {
                self.prox.dual_output_rule().map(drop)
            } else {
                self.prox.output_rule().map(drop)
            }
        })?;
        self.prox.inner_constant.as_ref().map_or(Ok(()), |_| {
            if self.method.is_some_and(Method::is_multiblock) {
                self.prox.dual_constant().map(drop)
            } else {
                self.prox.inner_constant().map(drop)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_benchmark_protocol() {
        let c = ExperimentConfig::default();
        assert_eq!(c.stop_tol, 1e-10);
        assert_eq!(c.max_passes, 3e4);
        assert_eq!(c.seeds, vec![0]);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sedes": [1]}"#).is_err());
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"method": "batch-rapgrad", "prox": {"k": 3, "output_rule": "best-by-metric"}}"#).unwrap();
        assert_eq!(c.method, Some(Method::BatchRapgrad));
        assert_eq!(c.prox.output_rule().unwrap(), OutputRule::BestByMetric);
    }

    #[test]
    fn bad_enum_is_a_usage_error() {
        let p = ProxSettings {
            inner_constant: Some("nope".into()),
            ..Default::default()
        };
        assert!(matches!(p.inner_constant(), Err(CliError::Usage(_))));
        assert_eq!(
            ProxSettings { inner_constant: Some("lemma".into()), ..Default::default() }.dual_constant().unwrap(),
            DualConstant::Lemma
        );
    }
}
