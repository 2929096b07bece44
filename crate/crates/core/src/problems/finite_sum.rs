use std::sync::Arc;

use crate::error::{ensure_dim, ensure_finite, Error, Result};
use crate::linalg;

use super::{ComponentOracle, Counters, FeasibleSet};

/// `min_{x∈X} (1/m) Σ_i f_i(x)` where every `f_i` has an `L`-Lipschitz
/// gradient and lower curvature `μ`.
#[derive(Debug, Clone)]
pub struct FiniteSumProblem {
    components: Vec<Arc<dyn ComponentOracle>>,
    set: FeasibleSet,
    lipschitz: f64,
    lower_curvature: f64,
    dim: usize,
}

impl FiniteSumProblem {
    pub fn new(
        components: Vec<Arc<dyn ComponentOracle>>,
        set: FeasibleSet,
        lipschitz: f64,
        lower_curvature: f64,
    ) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidProblem("at least one component is required".into()))?;
        let dim = first.dim();
        for c in &components {
            ensure_dim(dim, c.dim())?;
        }
        if let Some(n) = set.dim() {
            ensure_dim(dim, n)?;
        }
        if !(lower_curvature > 0.0 && lower_curvature.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "lower curvature μ must be positive, got {lower_curvature}"
            )));
        }
        if !(lipschitz >= lower_curvature && lipschitz.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "need 0 < μ ≤ L, got μ = {lower_curvature}, L = {lipschitz}"
            )));
        }
        Ok(Self {
            components,
            set,
            lipschitz,
            lower_curvature,
            dim,
        })
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn lower_curvature(&self) -> f64 {
        self.lower_curvature
    }

    pub fn set(&self) -> &FeasibleSet {
        &self.set
    }

    pub fn component(&self, i: usize) -> &dyn ComponentOracle {
        self.components[i].as_ref()
    }

    pub fn components(&self) -> &[Arc<dyn ComponentOracle>] {
        &self.components
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        ensure_dim(self.dim, x.len())?;
        ensure_finite(x, "point")
    }

    /// `(1/m) Σ f_i(x)`; charges `m` function evaluations.
    pub fn full_objective(&self, x: &[f64], counters: &mut Counters) -> Result<f64> {
        self.check_point(x)?;
        counters.function_evals += self.components.len() as u64;
        Ok(self.objective_unchecked(x))
    }

    /// `(1/m) Σ ∇f_i(x)`; charges `m` gradient evaluations (one pass).
    pub fn full_gradient(&self, x: &[f64], counters: &mut Counters) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut out = vec![0.0; self.dim];
        self.gradient_unchecked(x, &mut out);
        counters.gradient_evals += self.components.len() as u64;
        Ok(out)
    }

    pub(crate) fn objective_unchecked(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.components.iter().map(|c| c.value(x)).sum();
        sum / self.components.len() as f64
    }

    pub(crate) fn gradient_unchecked(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut scratch = vec![0.0; self.dim];
        for c in &self.components {
            c.gradient(x, &mut scratch);
            linalg::axpy(1.0, &scratch, out);
        }
        let inv_m = 1.0 / self.components.len() as f64;
        out.iter_mut().for_each(|v| *v *= inv_m);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::FnOracle;

    fn half_norm_sq(n: usize) -> Arc<dyn ComponentOracle> {
        Arc::new(FnOracle::new(
            n,
            |x| 0.5 * linalg::norm_sq(x),
            |x, g| g.copy_from_slice(x),
        ))
    }

    fn linear(slope: f64) -> Arc<dyn ComponentOracle> {
        Arc::new(FnOracle::new(1, move |x| slope * x[0], move |_, g| g[0] = slope))
    }

    #[test]
    fn objective_of_identical_components() {
        let p = FiniteSumProblem::new(vec![half_norm_sq(2); 3], FeasibleSet::WholeSpace, 1.0, 1.0).unwrap();
        let mut c = Counters::default();
        assert_eq!(p.full_objective(&[1.0, 0.0], &mut c).unwrap(), 0.5);
        assert_eq!(c.function_evals, 3);
    }

    #[test]
    fn objective_is_average() {
        let p = FiniteSumProblem::new(vec![linear(1.0), linear(3.0)], FeasibleSet::WholeSpace, 1.0, 1.0).unwrap();
        let mut c = Counters::default();
        assert_eq!(p.full_objective(&[1.0], &mut c).unwrap(), 2.0);
    }

    #[test]
    fn gradient_counts_one_pass() {
        let p = FiniteSumProblem::new(vec![half_norm_sq(2); 5], FeasibleSet::WholeSpace, 1.0, 1.0).unwrap();
        let mut c = Counters::default();
        assert_eq!(p.full_gradient(&[2.0, -1.0], &mut c).unwrap(), vec![2.0, -1.0]);
        assert_eq!(c.gradient_evals, 5);
    }

    #[test]
    fn single_component_gradient_is_component_gradient() {
        let p = FiniteSumProblem::new(vec![linear(-4.5)], FeasibleSet::WholeSpace, 1.0, 1.0).unwrap();
        let mut c = Counters::default();
        assert_eq!(p.full_gradient(&[0.3], &mut c).unwrap(), vec![-4.5]);
    }

    #[test]
    fn invalid_inputs() {
        let p = FiniteSumProblem::new(vec![half_norm_sq(2)], FeasibleSet::WholeSpace, 1.0, 1.0).unwrap();
        let mut c = Counters::default();
        assert!(matches!(p.full_objective(&[1.0], &mut c), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(p.full_gradient(&[1.0, f64::INFINITY], &mut c), Err(Error::NonFinite(_))));
        assert_eq!(c, Counters::default());
        assert!(FiniteSumProblem::new(vec![], FeasibleSet::WholeSpace, 1.0, 1.0).is_err());
        assert!(FiniteSumProblem::new(vec![half_norm_sq(2)], FeasibleSet::WholeSpace, 1.0, 0.0).is_err());
        assert!(FiniteSumProblem::new(vec![half_norm_sq(2)], FeasibleSet::WholeSpace, 1.0, 2.0).is_err());
        assert!(FiniteSumProblem::new(vec![half_norm_sq(2), half_norm_sq(3)], FeasibleSet::WholeSpace, 1.0, 1.0).is_err());
    }
}
