//! Gibbs-posterior comparators built from a bridged model.

use crate::bridge::BridgeProblem;
use crate::error::{DomainError, Error, Result};
use crate::layout::Layout;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GibbsVariant {
    /// `log g + log π₀`: the gradient kernel is dropped.
    Plain,
    /// `log g + log π₀ − λ h`: the loss value itself is penalized.
    JointShrinkage,
}

/// Wraps a problem so that its gradient kernel vanishes identically.
///
/// The base domain is kept, so barrier-constrained models stay inside their
/// feasible region.
pub struct GibbsBaseline<P> {
    inner: P,
    variant: GibbsVariant,
    lambda: f64,
}

/// Builds a Gibbs comparator. The joint variant needs a scalar loss.
pub fn gibbs_baseline<P: BridgeProblem>(problem: P, variant: GibbsVariant, lambda: f64) -> Result<GibbsBaseline<P>> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    if variant == GibbsVariant::JointShrinkage {
        let init = problem.initial_point();
        let (b, z) = problem.split(&init);
        if problem.loss(b, z).is_none() || problem.grad_loss(b, z).is_none() {
            return Err(Error::InvalidArgument(
                "joint-shrinkage baseline needs a model with a scalar loss".into(),
            ));
        }
    }
    Ok(GibbsBaseline {
        inner: problem,
        variant,
        lambda,
    })
}

impl<P: BridgeProblem> GibbsBaseline<P> {
    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn variant(&self) -> GibbsVariant {
        self.variant
    }

    fn loss_weight(&self) -> f64 {
        match self.variant {
            GibbsVariant::Plain => 0.0,
            GibbsVariant::JointShrinkage => self.lambda,
        }
    }
}

impl<P: BridgeProblem> BridgeProblem for GibbsBaseline<P> {
    fn layout(&self) -> &Layout {
        self.inner.layout()
    }

    fn dim_beta(&self) -> usize {
        self.inner.dim_beta()
    }

    fn dim_z(&self) -> usize {
        self.inner.dim_z()
    }

    fn check_domain(&self, beta: &[f64], z: &[f64]) -> std::result::Result<(), DomainError> {
        self.inner.check_domain(beta, z)
    }

    fn log_g(&self, beta: &[f64], z: &[f64]) -> f64 {
        let w = self.loss_weight();
        let base = self.inner.log_g(beta, z);
        if w == 0.0 {
            return base;
        }
        base - w * self.inner.loss(beta, z).expect("checked at construction")
    }

    fn grad_log_g(&self, beta: &[f64], z: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let w = self.loss_weight();
        let (mut gb, mut gz) = self.inner.grad_log_g(beta, z);
        if w != 0.0 {
            let (lb, lz) = self.inner.grad_loss(beta, z).expect("checked at construction");
            gb.axpy(-w, &lb, 1.0);
            gz.axpy(-w, &lz, 1.0);
        }
        (gb, gz)
    }

    fn grad_h(&self, _beta: &[f64], z: &[f64]) -> DVector<f64> {
        DVector::zeros(z.len())
    }

    fn hess_zz(&self, _beta: &[f64], z: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(z.len(), z.len())
    }

    fn hess_zbeta(&self, beta: &[f64], z: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(z.len(), beta.len())
    }

    fn kernel_vjp(&self, beta: &[f64], z: &[f64], _v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (DVector::zeros(beta.len()), DVector::zeros(z.len()))
    }

    fn log_prior(&self, beta: &[f64]) -> f64 {
        self.inner.log_prior(beta)
    }

    fn grad_log_prior(&self, beta: &[f64]) -> DVector<f64> {
        self.inner.grad_log_prior(beta)
    }

    fn loss(&self, beta: &[f64], z: &[f64]) -> Option<f64> {
        self.inner.loss(beta, z)
    }

    fn grad_loss(&self, beta: &[f64], z: &[f64]) -> Option<(DVector<f64>, DVector<f64>)> {
        self.inner.grad_loss(beta, z)
    }

    fn initial_point(&self) -> Vec<f64> {
        self.inner.initial_point()
    }

    fn derived_names(&self) -> Vec<String> {
        self.inner.derived_names()
    }

    fn derived(&self, beta: &[f64], z: &[f64]) -> Vec<f64> {
        self.inner.derived(beta, z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::{log_posterior, KernelConfig};
    use crate::models::NormalMeansModel;

    #[test]
    fn joint_with_zero_lambda_equals_plain() {
        let m = NormalMeansModel::new(1.0, vec![2.0, -1.0]).unwrap();
        let plain = gibbs_baseline(m.clone(), GibbsVariant::Plain, 5.0).unwrap();
        let joint = gibbs_baseline(m, GibbsVariant::JointShrinkage, 0.0).unwrap();
        let cfg = KernelConfig::default();
        let (b, z) = ([0.3], [0.4, -0.2]);
        assert_eq!(
            log_posterior(&plain, &b, &z, &cfg).unwrap(),
            log_posterior(&joint, &b, &z, &cfg).unwrap()
        );
    }

    #[test]
    fn plain_ignores_kernel_strength() {
        let m = NormalMeansModel::new(1.0, vec![2.0]).unwrap();
        let plain = gibbs_baseline(m.clone(), GibbsVariant::Plain, 0.0).unwrap();
        let a = log_posterior(&plain, &[0.0], &[0.0], &KernelConfig::with_lambda(1e4)).unwrap();
        let b = log_posterior(&m, &[0.0], &[0.0], &KernelConfig::with_lambda(0.0)).unwrap();
        assert_eq!(a, b);
    }
}
