//! Theoretical RaGrad parameters and the condition validator.

use serde::{Deserialize, Serialize};

use crate::conditions::{ConditionCheck, Relation, ValidationReport};
use crate::error::{Error, Result};

/// Which constant sets the inner iteration count `s = ⌈−ln C / ln α⌉`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerConstant {
    /// `C = M̃ = 6(5 + 2L/μ)·max{6/5, L²/μ²}`
    #[default]
    Theorem,
    /// `C = 7M/6` with `M = 6(5 + 2L/μ)`
    Lemma,
    /// `C = 6M/5` with `M = 6(5 + 2L/μ)`
    Experiments,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaGradSchedule {
    pub m: usize,
    pub lipschitz: f64,
    pub mu: f64,
    pub alpha: f64,
    pub tau: f64,
    pub eta: f64,
    pub s: usize,
    /// The constant inside the logarithm of `s`.
    pub m_tilde: f64,
    pub c: f64,
    pub l_hat: f64,
    pub constant: InnerConstant,
}

pub(crate) fn check_constants(lipschitz: f64, mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("μ must be positive, got {mu}")));
    }
    if !(lipschitz >= mu && lipschitz.is_finite()) {
        return Err(Error::InvalidParameter(format!("need 0 < μ ≤ L, got μ = {mu}, L = {lipschitz}")));
    }
    Ok(())
}

pub(crate) fn iterations_for(constant: f64, one_minus_alpha: f64) -> usize {
    // ln α computed as ln(1 − δ) to keep precision when δ is tiny.
    let s = (-constant.ln() / (-one_minus_alpha).ln_1p()).ceil();
    (s as usize).max(1)
}

pub fn compute_ragrad_schedule(m: usize, lipschitz: f64, mu: f64) -> Result<RaGradSchedule> {
    compute_ragrad_schedule_with(m, lipschitz, mu, InnerConstant::Theorem)
}

pub fn compute_ragrad_schedule_with(m: usize, lipschitz: f64, mu: f64, constant: InnerConstant) -> Result<RaGradSchedule> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    check_constants(lipschitz, mu)?;
    let mf = m as f64;
    let ratio = lipschitz / mu;
    let c = 2.0 + ratio;
    let delta = 2.0 / (mf * ((1.0 + 16.0 * c / mf).sqrt() + 1.0));
    let alpha = 1.0 - delta;
    let tau = 1.0 / (mf * delta) - 1.0;
    let eta = alpha / delta;
    let big_m = 6.0 * (5.0 + 2.0 * ratio);
    let m_tilde = match constant {
        InnerConstant::Theorem => big_m * (6.0f64 / 5.0).max(ratio * ratio),
        InnerConstant::Lemma => 7.0 * big_m / 6.0,
        InnerConstant::Experiments => 6.0 * big_m / 5.0,
    };
    Ok(RaGradSchedule {
        m,
        lipschitz,
        mu,
        alpha,
        tau,
        eta,
        s: iterations_for(m_tilde, delta),
        m_tilde,
        c,
        l_hat: lipschitz + 2.0 * mu,
        constant,
    })
}

impl RaGradSchedule {
    /// `γ_t = α^{−t}`, the weight sequence of the analysis.
    pub fn gamma(&self, t: usize) -> f64 {
        self.alpha.powi(-(t as i32))
    }

    /// Inner iterations after scaling by `factor`, floored at 1.
    pub fn scaled_s(&self, factor: f64) -> usize {
        ((self.s as f64 * factor).floor() as usize).max(1)
    }

    /// Contraction bound on `E‖x^s − x*‖²` relative to the initial distance.
    pub fn contraction_factor(&self, s: usize) -> f64 {
        self.alpha.powi(s as i32) * (1.0 + 2.0 * self.l_hat / self.mu)
    }
}

/// Checks the six inner-solver conditions for a constant-parameter schedule.
///
/// With `γ_t = α^{−t}` each condition is independent of `t`; they are stated
/// after dividing through by `γ_t`.
pub fn validate_ragrad_schedule(sch: &RaGradSchedule, m: usize, mu: f64) -> ValidationReport {
    let mf = m as f64;
    let (alpha, tau, eta, l_hat) = (sch.alpha, sch.tau, sch.eta, sch.l_hat);
    let ratio = 1.0 / alpha; // γ_{t+1}/γ_t
    let cross = (mf - 1.0).powi(2) * l_hat / (mf * mf * tau);
    ValidationReport::from_checks(vec![
        ConditionCheck::new("ss1", alpha * ratio, Relation::Equal, 1.0),
        ConditionCheck::new("ss2", ratio * (mf * (1.0 + tau) - 1.0), Relation::AtMost, mf * (1.0 + tau)),
        ConditionCheck::new("ss3", ratio * eta, Relation::AtMost, 1.0 + eta),
        ConditionCheck::new("ss4", eta * mu / 4.0, Relation::AtLeast, cross),
        ConditionCheck::new("ss5", eta * mu / 2.0, Relation::AtLeast, alpha * l_hat / tau + cross),
        ConditionCheck::new("ss6", eta * mu / 4.0, Relation::AtLeast, l_hat / (mf * (1.0 + tau))),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_example() {
        let s = compute_ragrad_schedule(4, 1.0, 1.0).unwrap();
        assert_eq!(s.c, 3.0);
        let alpha = 1.0 - 2.0 / (4.0 * (13f64.sqrt() + 1.0));
        assert!((s.alpha - alpha).abs() < 1e-15);
        assert!((s.alpha - 0.891435).abs() < 1e-6);
        assert!((s.tau - (1.0 / (4.0 * (1.0 - alpha)) - 1.0)).abs() < 1e-12);
        assert!((s.tau - 1.30276).abs() < 5e-5);
        assert!((s.eta - 8.2111).abs() < 1e-4);
        assert!((s.m_tilde - 50.4).abs() < 1e-12);
        assert_eq!(s.s, 35);
        assert!(validate_ragrad_schedule(&s, 4, 1.0).pass);
    }

    #[test]
    fn alternative_constants() {
        let l = compute_ragrad_schedule_with(4, 1.0, 1.0, InnerConstant::Lemma).unwrap();
        assert!((l.m_tilde - 49.0).abs() < 1e-12);
        let e = compute_ragrad_schedule_with(4, 1.0, 1.0, InnerConstant::Experiments).unwrap();
        assert!((e.m_tilde - 50.4).abs() < 1e-12);
    }

    #[test]
    fn reference_case_passes() {
        let s = compute_ragrad_schedule(10, 100.0, 1.0).unwrap();
        let r = validate_ragrad_schedule(&s, 10, 1.0);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn halved_tau_breaks_ss4_or_ss5() {
        let mut s = compute_ragrad_schedule(10, 100.0, 1.0).unwrap();
        s.tau /= 2.0;
        let r = validate_ragrad_schedule(&s, 10, 1.0);
        assert!(!r.pass);
        assert!(r.violated("ss4") || r.violated("ss5"));
    }

    #[test]
    fn single_component() {
        let s = compute_ragrad_schedule(1, 50.0, 1.0).unwrap();
        assert!(validate_ragrad_schedule(&s, 1, 1.0).pass);
    }

    #[test]
    fn rejects_bad_constants() {
        assert!(compute_ragrad_schedule(3, 1.0, 0.0).is_err());
        assert!(compute_ragrad_schedule(3, 1.0, 2.0).is_err());
        assert!(compute_ragrad_schedule(0, 1.0, 1.0).is_err());
    }

    #[test]
    fn scaled_s_floors_at_one() {
        let s = compute_ragrad_schedule(4, 1.0, 1.0).unwrap();
        assert_eq!(s.scaled_s(0.1), 3);
        assert_eq!(s.scaled_s(1e-6), 1);
    }

    proptest! {
        #[test]
        fn always_valid(m in 1usize..2000, ratio in 1.0f64..1e5, mu in 1e-4f64..10.0) {
            let s = compute_ragrad_schedule(m, ratio * mu, mu).unwrap();
            prop_assert!(s.alpha > 0.0 && s.alpha < 1.0);
            prop_assert!(s.tau > 0.0 && s.eta > 0.0 && s.s >= 1);
            let r = validate_ragrad_schedule(&s, m, mu);
            prop_assert!(r.pass, "{:?}", r);
        }

        #[test]
        fn alpha_increases_with_condition_number(m in 1usize..500, r1 in 1.0f64..1e4, bump in 1.0f64..1e3) {
            let a = compute_ragrad_schedule(m, r1, 1.0).unwrap().alpha;
            let b = compute_ragrad_schedule(m, r1 + bump, 1.0).unwrap().alpha;
            prop_assert!(b >= a);
        }
    }
}
