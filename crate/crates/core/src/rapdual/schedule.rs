//! Theoretical RaDual parameters and the condition validator.

use serde::{Deserialize, Serialize};

use crate::conditions::{ConditionCheck, Relation, ValidationReport};
use crate::error::{Error, Result};
use crate::rapgrad::schedule::{check_constants, iterations_for};

/// Which constant sets `s = ⌈−ln C / ln α⌉`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualConstant {
    /// `C = M̂ = (2 + L/μ)·max{2, L²/μ²}`
    #[default]
    Theorem,
    /// `C = 4 + 2L/μ`
    Lemma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaDualSchedule {
    /// Number of blocks including the last one.
    pub m: usize,
    pub lipschitz: f64,
    pub mu: f64,
    pub alpha: f64,
    /// Momentum weight `α_t = (m − 1)α`.
    pub alpha_t: f64,
    pub tau: f64,
    pub eta: f64,
    pub s: usize,
    pub m_hat: f64,
    pub c: f64,
    pub abar: f64,
    /// Strong convexity modulus `1/L̂` of the dual function.
    pub mu_bar: f64,
    pub l_hat: f64,
    pub constant: DualConstant,
}

pub fn compute_radual_schedule(m: usize, lipschitz: f64, mu: f64, abar: f64) -> Result<RaDualSchedule> {
    compute_radual_schedule_with(m, lipschitz, mu, abar, DualConstant::Theorem)
}

pub fn compute_radual_schedule_with(m: usize, lipschitz: f64, mu: f64, abar: f64, constant: DualConstant) -> Result<RaDualSchedule> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("RaDual needs m ≥ 2 blocks, got {m}")));
    }
    check_constants(lipschitz, mu)?;
    if !(abar > 0.0 && abar.is_finite()) {
        return Err(Error::InvalidParameter(format!("Ā must be positive, got {abar}")));
    }
    let mf = (m - 1) as f64;
    let ratio = lipschitz / mu;
    let c = (2.0 * mu + lipschitz) * abar * abar / mu;
    let delta = 2.0 / (mf * ((1.0 + 8.0 * c).sqrt() + 1.0));
    let alpha = 1.0 - delta;
    let eta = (alpha - (mf - 1.0) / mf) * mu / delta;
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("schedule produced η = {eta} ≤ 0")));
    }
    let m_hat = match constant {
        DualConstant::Theorem => (2.0 + ratio) * 2f64.max(ratio * ratio),
        DualConstant::Lemma => 4.0 + 2.0 * ratio,
    };
    let l_hat = lipschitz + 2.0 * mu;
    Ok(RaDualSchedule {
        m,
        lipschitz,
        mu,
        alpha,
        alpha_t: mf * alpha,
        tau: alpha / delta,
        eta,
        s: iterations_for(m_hat, delta),
        m_hat,
        c,
        abar,
        mu_bar: 1.0 / l_hat,
        l_hat,
        constant,
    })
}

impl RaDualSchedule {
    pub fn gamma(&self, t: usize) -> f64 {
        self.alpha.powi(-(t as i32))
    }

    pub fn scaled_s(&self, factor: f64) -> usize {
        ((self.s as f64 * factor).floor() as usize).max(1)
    }

    /// `α^s · 2L̂/μ`, the contraction bound after `s` iterations.
    pub fn contraction_factor(&self, s: usize) -> f64 {
        self.alpha.powi(s as i32) * 2.0 * self.l_hat / self.mu
    }
}

/// Checks the five inner-solver conditions for a constant-parameter schedule,
/// divided through by `γ_t`.
pub fn validate_radual_schedule(sch: &RaDualSchedule, m: usize, mu: f64) -> ValidationReport {
    let mf = m as f64;
    let (alpha, tau, eta) = (sch.alpha, sch.tau, sch.eta);
    let ratio = 1.0 / alpha; // γ_{t+1}/γ_t
    ValidationReport::from_checks(vec![
        ConditionCheck::new("c:ss1", sch.alpha_t, Relation::Equal, (mf - 1.0) * alpha),
        ConditionCheck::new("c:ss2", ratio * alpha, Relation::Equal, 1.0),
        ConditionCheck::new(
            "c:ss3",
            ratio * ((mf - 1.0) * eta + (mf - 2.0) * mu),
            Relation::AtMost,
            (mf - 1.0) * (eta + mu),
        ),
        ConditionCheck::new("c:ss4", ratio * tau, Relation::AtMost, tau + 1.0),
        ConditionCheck::new(
            "c:ss5",
            2.0 * (mf - 1.0) * alpha * sch.abar * sch.abar,
            Relation::AtMost,
            sch.mu_bar * eta * tau,
        ),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_example() {
        let s = compute_radual_schedule(3, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(s.c, 3.0);
        assert!((s.alpha - 5.0 / 6.0).abs() < 1e-15);
        assert!((s.alpha_t - 5.0 / 3.0).abs() < 1e-15);
        assert!((s.tau - 5.0).abs() < 1e-13);
        assert!((s.eta - 2.0).abs() < 1e-13);
        assert_eq!(s.m_hat, 6.0);
        assert_eq!(s.s, 10);
        assert!((s.mu_bar - 1.0 / 3.0).abs() < 1e-15);
        assert!(validate_radual_schedule(&s, 3, 1.0).pass);
    }

    #[test]
    fn lemma_constant() {
        let s = compute_radual_schedule_with(3, 1.0, 1.0, 1.0, DualConstant::Lemma).unwrap();
        assert_eq!(s.m_hat, 6.0);
        let s = compute_radual_schedule_with(3, 10.0, 1.0, 1.0, DualConstant::Lemma).unwrap();
        assert_eq!(s.m_hat, 24.0);
    }

    #[test]
    fn reference_case_passes() {
        let s = compute_radual_schedule(10, 50.0, 1.0, 2.0).unwrap();
        assert!(validate_radual_schedule(&s, 10, 1.0).pass);
    }

    #[test]
    fn quartered_tau_breaks_ss5() {
        let mut s = compute_radual_schedule(10, 50.0, 1.0, 2.0).unwrap();
        s.tau /= 4.0;
        let r = validate_radual_schedule(&s, 10, 1.0);
        assert!(r.violated("c:ss5"));
    }

    #[test]
    fn two_blocks() {
        let s = compute_radual_schedule(2, 7.0, 1.0, 0.3).unwrap();
        assert_eq!(s.alpha_t, s.alpha);
        assert!(validate_radual_schedule(&s, 2, 1.0).pass);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(compute_radual_schedule(1, 1.0, 1.0, 1.0).is_err());
        assert!(compute_radual_schedule(3, 1.0, 1.0, 0.0).is_err());
        assert!(compute_radual_schedule(3, 1.0, 2.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn always_valid(m in 2usize..2000, ratio in 1.0f64..1e4, mu in 1e-3f64..10.0, abar in 1e-2f64..20.0) {
            let s = compute_radual_schedule(m, ratio * mu, mu, abar).unwrap();
            prop_assert!(s.eta > 0.0);
            let r = validate_radual_schedule(&s, m, mu);
            prop_assert!(r.pass, "{:?}", r);
        }
    }
}
