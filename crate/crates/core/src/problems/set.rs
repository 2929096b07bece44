use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

/// Closed convex feasible set: the whole space or an axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeasibleSet {
    WholeSpace,
    Box(BoxSet),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Deserialize)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawBox> for BoxSet {
    type Error = Error;

    fn try_from(raw: RawBox) -> Result<Self> {
        BoxSet::new(raw.lower, raw.upper)
    }
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        ensure_dim(lower.len(), upper.len())?;
        for (j, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() {
                return Err(Error::InvalidSet(format!("NaN bound at coordinate {j}")));
            }
            if l > u {
                return Err(Error::InvalidSet(format!(
                    "lower bound {l} exceeds upper bound {u} at coordinate {j}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|v| v.is_finite())
    }
}

impl FeasibleSet {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        BoxSet::new(lower, upper).map(FeasibleSet::Box)
    }

    /// Box `[lo, hi]^n`.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::boxed(vec![lo; n], vec![hi; n])
    }

    /// Dimension the set is tied to, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            FeasibleSet::WholeSpace => None,
            FeasibleSet::Box(b) => Some(b.dim()),
        }
    }

    pub fn is_compact(&self) -> bool {
        match self {
            FeasibleSet::WholeSpace => false,
            FeasibleSet::Box(b) => b.is_bounded(),
        }
    }

    /// Euclidean projection.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        crate::error::ensure_finite(x, "projection input")?;
        if let Some(n) = self.dim() {
            ensure_dim(n, x.len())?;
        }
        let mut out = x.to_vec();
        self.project_in_place(&mut out);
        Ok(out)
    }

    /// Projection without validation; callers guarantee dimensions.
    pub fn project_in_place(&self, x: &mut [f64]) {
        if let FeasibleSet::Box(b) = self {
            for ((v, l), u) in x.iter_mut().zip(&b.lower).zip(&b.upper) {
                *v = v.clamp(*l, *u);
            }
        }
    }

    /// Largest bound violation of `x` (zero when inside).
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            FeasibleSet::WholeSpace => 0.0,
            FeasibleSet::Box(b) => x
                .iter()
                .zip(&b.lower)
                .zip(&b.upper)
                .map(|((v, l), u)| (l - v).max(v - u).max(0.0))
                .fold(0.0, f64::max),
        }
    }
}
