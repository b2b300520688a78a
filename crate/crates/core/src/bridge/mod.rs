//! The gradient-bridged posterior.
//!
//! A model supplies a likelihood kernel `g`, a sub-problem loss `h` through its
//! partial gradient `∇_z h`, and the two Hessian blocks of `h`. The posterior
//! over `(β, z)` is
//!
//! ```text
//! log Π(β, z | y) = log g(β, z) − λ ‖∇_z h(β, z)‖² + log π₀(β) + const
//! ```
//!
//! so `z` concentrates around the partial minimizer `ẑ_β` without ever
//! solving the sub-problem. All quantities are expressed in the sampling
//! coordinates described by the problem's [`Layout`].

mod barrier;
mod check;

pub use barrier::{barrier_wrap, BarrierConstraint, BarrierWrapped};
pub use check::{check_gradient, CoordinateCheck, GradientReport};

use crate::error::{DomainError, Error, Result};
use crate::layout::Layout;
use crate::sampler::LogDensity;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// The bundle of evaluators defining one gradient-bridged model.
///
/// Implementations are pure: identical inputs give identical outputs, and a
/// problem may be shared read-only between concurrently running chains.
///
/// `β` covers every non-latent parameter (including nuisance scales). The
/// latent block `z` may be a primal variable or a dual variable; `grad_h`
/// always has length `dim_z`.
pub trait BridgeProblem: Send + Sync {
    /// Layout of the full sampling vector `[β; z]`.
    fn layout(&self) -> &Layout;

    fn dim_beta(&self) -> usize;

    fn dim_z(&self) -> usize;

    /// Ok iff `(β, z)` lies in the open feasible region.
    fn check_domain(&self, beta: &[f64], z: &[f64]) -> std::result::Result<(), DomainError>;

    /// Log likelihood kernel, up to an additive constant. Any log-Jacobian of a
    /// transform applied to `z` is included here.
    fn log_g(&self, beta: &[f64], z: &[f64]) -> f64;

    /// Gradient of [`BridgeProblem::log_g`] as `(∂/∂β, ∂/∂z)`.
    fn grad_log_g(&self, beta: &[f64], z: &[f64]) -> (DVector<f64>, DVector<f64>);

    /// Partial gradient `∇_z h`, the quantity the shrinkage kernel drives to zero.
    fn grad_h(&self, beta: &[f64], z: &[f64]) -> DVector<f64>;

    /// `∂(∇_z h)/∂z`, `dim_z × dim_z`.
    fn hess_zz(&self, beta: &[f64], z: &[f64]) -> DMatrix<f64>;

    /// `∂(∇_z h)/∂β`, `dim_z × dim_beta`.
    fn hess_zbeta(&self, beta: &[f64], z: &[f64]) -> DMatrix<f64>;

    /// Log prior on `β` including the log-Jacobian of its sampling transform.
    fn log_prior(&self, beta: &[f64]) -> f64;

    fn grad_log_prior(&self, beta: &[f64]) -> DVector<f64>;

    /// Computes `(hess_zbetaᵀ v, hess_zzᵀ v)`. Models with structured Hessians
    /// override this to avoid forming the dense blocks.
    fn kernel_vjp(&self, beta: &[f64], z: &[f64], v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (
            self.hess_zbeta(beta, z).tr_mul(v),
            self.hess_zz(beta, z).tr_mul(v),
        )
    }

    /// Scalar sub-problem loss `h`, when the model has one in these coordinates.
    fn loss(&self, _beta: &[f64], _z: &[f64]) -> Option<f64> {
        None
    }

    /// Gradient of [`BridgeProblem::loss`] as `(∂/∂β, ∂/∂z)`.
    fn grad_loss(&self, _beta: &[f64], _z: &[f64]) -> Option<(DVector<f64>, DVector<f64>)> {
        None
    }

    /// A feasible starting point for mode finding and sampling.
    fn initial_point(&self) -> Vec<f64>;

    /// Names of model-specific derived quantities written next to each draw.
    fn derived_names(&self) -> Vec<String> {
        Vec::new()
    }

    fn derived(&self, _beta: &[f64], _z: &[f64]) -> Vec<f64> {
        Vec::new()
    }

    fn dim(&self) -> usize {
        self.dim_beta() + self.dim_z()
    }

    /// Splits a full sampling vector into `(β, z)`.
    fn split<'a>(&self, theta: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        theta.split_at(self.dim_beta())
    }

    /// `Ĝ = [∇²_{zβ} h, ∇²_{zz} h]ᵀ`, the `dim × dim_z` block used by the
    /// projection mass matrix.
    fn g_matrix(&self, beta: &[f64], z: &[f64]) -> DMatrix<f64> {
        let hb = self.hess_zbeta(beta, z);
        let hz = self.hess_zz(beta, z);
        let db = self.dim_beta();
        let dz = self.dim_z();
        let mut g = DMatrix::zeros(db + dz, dz);
        g.view_mut((0, 0), (db, dz)).copy_from(&hb.transpose());
        g.view_mut((db, 0), (dz, dz)).copy_from(&hz.transpose());
        g
    }
}

/// Shrinkage strength and log-barrier scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    pub lambda: f64,
    pub barrier_t: f64,
}

impl KernelConfig {
    pub const DEFAULT_LAMBDA: f64 = 100.0;
    pub const DEFAULT_BARRIER_T: f64 = 1000.0;

    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.barrier_t > 0.0 && self.barrier_t.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "barrier_t must be > 0, got {}",
                self.barrier_t
            )));
        }
        Ok(())
    }
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            lambda: Self::DEFAULT_LAMBDA,
            barrier_t: Self::DEFAULT_BARRIER_T,
        }
    }
}

/// `−λ ‖∇_z h(β, z)‖²`.
pub fn shrinkage_log_kernel<P: BridgeProblem + ?Sized>(
    problem: &P,
    beta: &[f64],
    z: &[f64],
    cfg: &KernelConfig,
) -> std::result::Result<f64, DomainError> {
    problem.check_domain(beta, z)?;
    if cfg.lambda == 0.0 {
        return Ok(0.0);
    }
    Ok(-cfg.lambda * problem.grad_h(beta, z).norm_squared())
}

/// `log g + log π₀(β) − λ ‖∇_z h‖²`, up to a constant.
///
/// Points outside the domain return the violation, which samplers treat as a
/// log density of negative infinity.
pub fn log_posterior<P: BridgeProblem + ?Sized>(
    problem: &P,
    beta: &[f64],
    z: &[f64],
    cfg: &KernelConfig,
) -> std::result::Result<f64, DomainError> {
    let kernel = shrinkage_log_kernel(problem, beta, z, cfg)?;
    Ok(problem.log_g(beta, z) + problem.log_prior(beta) + kernel)
}

/// Gradient of [`log_posterior`] over `[β; z]`.
///
/// The kernel contributes `−2λ [∇²_{zβ}h, ∇²_{zz}h]ᵀ ∇_z h`, which stays
/// well-behaved as `∇_z h → 0`.
pub fn grad_log_posterior<P: BridgeProblem + ?Sized>(
    problem: &P,
    beta: &[f64],
    z: &[f64],
    cfg: &KernelConfig,
) -> std::result::Result<DVector<f64>, DomainError> {
    problem.check_domain(beta, z)?;
    let db = problem.dim_beta();
    let (gb, gz) = problem.grad_log_g(beta, z);
    let prior = problem.grad_log_prior(beta);
    let mut out = DVector::zeros(db + problem.dim_z());
    out.rows_mut(0, db).copy_from(&(gb + prior));
    out.rows_mut(db, problem.dim_z()).copy_from(&gz);
    if cfg.lambda != 0.0 {
        let r = problem.grad_h(beta, z);
        let (kb, kz) = problem.kernel_vjp(beta, z, &r);
        let s = -2.0 * cfg.lambda;
        out.rows_mut(0, db).axpy(s, &kb, 1.0);
        out.rows_mut(db, problem.dim_z()).axpy(s, &kz, 1.0);
    }
    Ok(out)
}

/// Displacement bound `ε / ((1 − k) λ_min(H))` on `‖z − ẑ‖` for points with
/// `‖∇_z h‖ ≤ ε` inside the Hessian-based neighborhood of radius `k`.
pub fn relaxation_bound(hess_at_opt: &DMatrix<f64>, k: f64, eps: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&k) {
        return Err(Error::InvalidArgument(format!("k must lie in [0, 1), got {k}")));
    }
    if eps < 0.0 {
        return Err(Error::InvalidArgument(format!("eps must be >= 0, got {eps}")));
    }
    let n = hess_at_opt.nrows();
    if n == 0 || hess_at_opt.ncols() != n {
        return Err(Error::InvalidArgument("Hessian must be square and non-empty".into()));
    }
    let asym = (hess_at_opt - hess_at_opt.transpose()).abs().max();
    if asym > 1e-10 * hess_at_opt.abs().max().max(1.0) {
        return Err(Error::InvalidArgument("Hessian is not symmetric".into()));
    }
    let lmin = SymmetricEigen::new(hess_at_opt.clone()).eigenvalues.min();
    if lmin <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "Hessian is not positive definite (smallest eigenvalue {lmin})"
        )));
    }
    Ok(eps / ((1.0 - k) * lmin))
}

/// The joint posterior over `[β; z]` as a sampler target.
pub struct BridgedPosterior<'a, P: ?Sized> {
    pub problem: &'a P,
    pub cfg: KernelConfig,
}

impl<'a, P: BridgeProblem + ?Sized> BridgedPosterior<'a, P> {
    pub fn new(problem: &'a P, cfg: KernelConfig) -> Self {
        Self { problem, cfg }
    }
}

impl<P: BridgeProblem + ?Sized> LogDensity for BridgedPosterior<'_, P> {
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> std::result::Result<f64, DomainError> {
        let (beta, z) = self.problem.split(theta);
        let lp = log_posterior(self.problem, beta, z, &self.cfg)?;
        let g = grad_log_posterior(self.problem, beta, z, &self.cfg)?;
        grad.copy_from_slice(g.as_slice());
        Ok(lp)
    }

    fn layout(&self) -> Layout {
        self.problem.layout().clone()
    }

    fn initial_point(&self) -> Vec<f64> {
        self.problem.initial_point()
    }
}

/// The conditional posterior of `z` with `β` held fixed.
pub struct ConditionalPosterior<'a, P: ?Sized> {
    pub problem: &'a P,
    pub beta: Vec<f64>,
    pub cfg: KernelConfig,
}

impl<'a, P: BridgeProblem + ?Sized> ConditionalPosterior<'a, P> {
    pub fn new(problem: &'a P, beta: Vec<f64>, cfg: KernelConfig) -> Self {
        assert_eq!(beta.len(), problem.dim_beta());
        Self { problem, beta, cfg }
    }
}

impl<P: BridgeProblem + ?Sized> LogDensity for ConditionalPosterior<'_, P> {
    fn dim(&self) -> usize {
        self.problem.dim_z()
    }

    fn log_density_grad(&self, z: &[f64], grad: &mut [f64]) -> std::result::Result<f64, DomainError> {
        let lp = log_posterior(self.problem, &self.beta, z, &self.cfg)?;
        let g = grad_log_posterior(self.problem, &self.beta, z, &self.cfg)?;
        grad.copy_from_slice(&g.as_slice()[self.problem.dim_beta()..]);
        Ok(lp)
    }

    fn layout(&self) -> Layout {
        self.problem.layout().suffix(self.problem.dim_beta())
    }

    fn initial_point(&self) -> Vec<f64> {
        self.problem.initial_point()[self.problem.dim_beta()..].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::NormalMeansModel;

    fn single_obs() -> NormalMeansModel {
        NormalMeansModel::new(1.0, vec![2.0]).unwrap()
    }

    #[test]
    fn kernel_vanishes_at_minimizer() {
        let m = single_obs();
        // β on log scale: log 1 = 0; ẑ = (1 − τ/(τ+β)) y = 1
        let k = shrinkage_log_kernel(&m, &[0.0], &[1.0], &KernelConfig::with_lambda(5.0)).unwrap();
        assert_eq!(k, 0.0);
    }

    #[test]
    fn kernel_zero_when_lambda_zero() {
        let m = single_obs();
        let k = shrinkage_log_kernel(&m, &[0.3], &[-4.0], &KernelConfig::with_lambda(0.0)).unwrap();
        assert_eq!(k, 0.0);
    }

    #[test]
    fn kernel_off_minimizer() {
        // ∇_z h = (0 − 2)/1 + 0/1 = −2, so the kernel is −λ·4
        let m = single_obs();
        let k = shrinkage_log_kernel(&m, &[0.0], &[0.0], &KernelConfig::with_lambda(1.0)).unwrap();
        assert!((k + 4.0).abs() < 1e-14);
    }

    #[test]
    fn kernel_is_additive_in_lambda() {
        let m = NormalMeansModel::new(0.7, vec![1.0, -0.5, 2.5]).unwrap();
        let (b, z) = ([0.4], [0.1, 0.2, -0.3]);
        let k = |l: f64| shrinkage_log_kernel(&m, &b, &z, &KernelConfig::with_lambda(l)).unwrap();
        assert!((k(1.5) + k(2.5) - k(4.0)).abs() < 1e-12);
        assert!(k(4.0) <= k(1.5));
    }

    #[test]
    fn lambda_zero_posterior_is_g_plus_prior() {
        let m = single_obs();
        let (b, z) = ([0.2], [0.7]);
        let lp = log_posterior(&m, &b, &z, &KernelConfig::with_lambda(0.0)).unwrap();
        assert_eq!(lp, m.log_g(&b, &z) + m.log_prior(&b));
        let g = grad_log_posterior(&m, &b, &z, &KernelConfig::with_lambda(0.0)).unwrap();
        let (gb, gz) = m.grad_log_g(&b, &z);
        let gp = m.grad_log_prior(&b);
        assert_eq!(g[0], gb[0] + gp[0]);
        assert_eq!(g[1], gz[0]);
    }

    #[test]
    fn kernel_gradient_vanishes_at_minimizer() {
        let m = single_obs();
        let cfg0 = KernelConfig::with_lambda(0.0);
        let cfg = KernelConfig::with_lambda(50.0);
        let a = grad_log_posterior(&m, &[0.0], &[1.0], &cfg0).unwrap();
        let b = grad_log_posterior(&m, &[0.0], &[1.0], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn conditional_quadratic_form_differences() {
        // Normal means: with β fixed the z-conditional is Gaussian with precision a + 2λa².
        let m = single_obs();
        let lambda = 3.0;
        let cfg = KernelConfig::with_lambda(lambda);
        let a: f64 = 2.0;
        let zhat = 1.0;
        let lp = |z: f64| log_posterior(&m, &[0.0], &[z], &cfg).unwrap();
        let q = |z: f64| -(z - zhat).powi(2) * a / 2.0 - lambda * (z - zhat).powi(2) * a * a;
        for (z1, z2) in [(0.0, 1.0), (1.7, -0.4), (3.0, 2.2)] {
            assert!(((lp(z1) - lp(z2)) - (q(z1) - q(z2))).abs() < 1e-10);
        }
    }

    #[test]
    fn domain_violation_is_reported() {
        let m = single_obs();
        // β is sampled on the log scale, so non-finite values are the only violations.
        let err = log_posterior(&m, &[f64::NAN], &[0.0], &KernelConfig::default()).unwrap_err();
        assert_eq!(err.block, "beta");
    }

    #[test]
    fn relaxation_bound_values() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert_eq!(relaxation_bound(&i2, 0.0, 0.0).unwrap(), 0.0);
        assert!((relaxation_bound(&i2, 0.0, 0.3).unwrap() - 0.3).abs() < 1e-15);
        let h = DMatrix::<f64>::identity(3, 3) * 2.0;
        let b = relaxation_bound(&h, 0.0, 0.1).unwrap();
        assert!((b - 0.05).abs() < 1e-15);
        // normal means: z − ẑ = ∇h / a, so ‖z − ẑ‖ = ε / a exactly
        let eps = 0.1;
        let direct = eps / 2.0;
        assert!((b - direct).abs() < 1e-15);
    }

    #[test]
    fn relaxation_bound_rejects_bad_arguments() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert!(relaxation_bound(&i2, 1.0, 0.1).is_err());
        let neg = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(relaxation_bound(&neg, 0.0, 0.1).is_err());
    }
}
