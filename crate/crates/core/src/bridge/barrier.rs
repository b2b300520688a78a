//! Log-barrier relaxation of inequality-constrained sub-problems.
//!
//! `h = h̃ − (1/t) Σ_j log r_j(z)` pushes boundary optima into the interior so
//! that first-order stationarity characterizes the minimizer again.

use crate::error::DomainError;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// One constraint `r(z) > 0`.
#[derive(Clone)]
pub struct BarrierConstraint {
    pub r: ScalarFn,
    pub grad_r: VectorFn,
    /// `None` for affine constraints, whose second derivative is zero.
    pub hess_r: Option<MatrixFn>,
}

impl BarrierConstraint {
    pub fn new(
        r: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        grad_r: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            r: Arc::new(r),
            grad_r: Arc::new(grad_r),
            hess_r: None,
        }
    }

    /// `aᵀz + b > 0`.
    pub fn affine(a: DVector<f64>, b: f64) -> Self {
        let a2 = a.clone();
        Self::new(move |z| a.dot(z) + b, move |_| a2.clone())
    }

    pub fn with_hessian(mut self, hess_r: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.hess_r = Some(Arc::new(hess_r));
        self
    }
}

/// A sub-problem gradient and Hessian with barrier terms folded in.
pub struct BarrierWrapped {
    base_grad: VectorFn,
    base_hess: Option<MatrixFn>,
    constraints: Vec<BarrierConstraint>,
    t: f64,
}

/// Wraps `∇_z h̃` into `∇_z h̃ − (1/t) Σ_j ∇r_j / r_j`.
pub fn barrier_wrap(
    base_grad_h: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    constraints: Vec<BarrierConstraint>,
    t: f64,
) -> BarrierWrapped {
    assert!(t > 0.0, "barrier scale must be positive");
    BarrierWrapped {
        base_grad: Arc::new(base_grad_h),
        base_hess: None,
        constraints,
        t,
    }
}

impl BarrierWrapped {
    /// Supplies `∇²_{zz} h̃` so [`BarrierWrapped::hess`] can be evaluated.
    pub fn with_base_hessian(
        mut self,
        hess: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.base_hess = Some(Arc::new(hess));
        self
    }

    fn values(&self, z: &DVector<f64>) -> Result<Vec<f64>, DomainError> {
        self.constraints
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let r = (c.r)(z);
                if r > 0.0 {
                    Ok(r)
                } else {
                    Err(DomainError::new("z", format!("constraint {j} has r = {r} <= 0")))
                }
            })
            .collect()
    }

    pub fn grad(&self, z: &DVector<f64>) -> Result<DVector<f64>, DomainError> {
        let r = self.values(z)?;
        let mut g = (self.base_grad)(z);
        for (c, rj) in self.constraints.iter().zip(r) {
            g.axpy(-1.0 / (self.t * rj), &(c.grad_r)(z), 1.0);
        }
        Ok(g)
    }

    /// `∇²h̃ + (1/t) Σ_j [∇r_j ∇r_jᵀ / r_j² − ∇²r_j / r_j]`.
    pub fn hess(&self, z: &DVector<f64>) -> Result<DMatrix<f64>, DomainError> {
        let r = self.values(z)?;
        let n = z.len();
        let mut h = match &self.base_hess {
            Some(f) => f(z),
            None => DMatrix::zeros(n, n),
        };
        for (c, rj) in self.constraints.iter().zip(r) {
            let gr = (c.grad_r)(z);
            h.ger(1.0 / (self.t * rj * rj), &gr, &gr, 1.0);
            if let Some(hr) = &c.hess_r {
                h -= hr(z) / (self.t * rj);
            }
        }
        Ok(h)
    }
}
