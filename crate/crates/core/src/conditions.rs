//! Reports produced by the schedule validators.

use serde::{Deserialize, Serialize};

/// Multiplicative slack applied to every condition.
pub const CONDITION_SLACK: f64 = 1.0 + 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    /// `lhs = rhs` up to the slack, in either direction.
    Equal,
    /// `lhs ≤ rhs · slack`
    AtMost,
    /// `lhs · slack ≥ rhs`
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub relation: Relation,
    pub holds: bool,
}

impl ConditionCheck {
    pub fn new(name: &str, lhs: f64, relation: Relation, rhs: f64) -> Self {
        let holds = match relation {
            Relation::Equal => {
                lhs <= rhs * CONDITION_SLACK + f64::MIN_POSITIVE && rhs <= lhs * CONDITION_SLACK + f64::MIN_POSITIVE
            }
            Relation::AtMost => lhs <= rhs * CONDITION_SLACK,
            Relation::AtLeast => lhs * CONDITION_SLACK >= rhs,
        } && lhs.is_finite()
            && rhs.is_finite();
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            relation,
            holds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub checks: Vec<ConditionCheck>,
}

impl ValidationReport {
    pub fn from_checks(checks: Vec<ConditionCheck>) -> Self {
        Self {
            pass: checks.iter().all(|c| c.holds),
            checks,
        }
    }

    pub fn violations(&self) -> impl Iterator<Item = &ConditionCheck> {
        self.checks.iter().filter(|c| !c.holds)
    }

    pub fn violated(&self, name: &str) -> bool {
        self.violations().any(|c| c.name == name)
    }
}
