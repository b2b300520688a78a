//! Normal means: `y_i ~ N(z_i, τ)`, `z_i ~ N(0, β)`, with the sub-problem loss
//! `h = ‖z − y‖²/(2τ) + ‖z‖²/(2β)` whose minimizer is `{1 − τ/(τ+β)} y`.

use super::calibration::calibration_m;
use crate::bridge::BridgeProblem;
use crate::error::{DomainError, Error, Result};
use crate::layout::{Layout, Transform};
use nalgebra::{DMatrix, DVector};

/// Samples `(log β, z)`. `β` has an inverse-gamma prior.
#[derive(Debug, Clone)]
pub struct NormalMeansModel {
    tau: f64,
    y: Vec<f64>,
    prior_shape: f64,
    prior_scale: f64,
    /// When set, the `β^{-n/2}` normalizer of `g` is replaced by `m(β)^{-n}`
    /// computed at this λ.
    calibration_lambda: Option<f64>,
    layout: Layout,
}

impl NormalMeansModel {
    pub const DEFAULT_PRIOR_SHAPE: f64 = 2.0;
    pub const DEFAULT_PRIOR_SCALE: f64 = 1.0;

    pub fn new(tau: f64, y: Vec<f64>) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau must be > 0, got {tau}")));
        }
        if y.is_empty() {
            return Err(Error::InvalidArgument("normal means needs at least one observation".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("observations must be finite".into()));
        }
        let layout = Layout::new()
            .push("beta", 1, Transform::Log)
            .push("z", y.len(), Transform::Identity);
        Ok(Self {
            tau,
            y,
            prior_shape: Self::DEFAULT_PRIOR_SHAPE,
            prior_scale: Self::DEFAULT_PRIOR_SCALE,
            calibration_lambda: None,
            layout,
        })
    }

    /// Inverse-gamma `(shape, scale)` prior on `β`.
    pub fn with_prior(mut self, shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && scale > 0.0) {
            return Err(Error::InvalidArgument("inverse-gamma prior needs shape, scale > 0".into()));
        }
        self.prior_shape = shape;
        self.prior_scale = scale;
        Ok(self)
    }

    /// Uses the calibrated normalizer `m(β)^{-n}` for the given λ.
    pub fn calibrated(mut self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
        }
        self.calibration_lambda = Some(lambda);
        Ok(self)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// `ẑ_β = {1 − τ/(τ+β)} y`.
    pub fn minimizer(&self, beta: f64) -> Vec<f64> {
        let s = 1.0 - self.tau / (self.tau + beta);
        self.y.iter().map(|v| s * v).collect()
    }

    fn beta(log_beta: &[f64]) -> f64 {
        log_beta[0].exp()
    }

    /// `log` of the normalizer of `g` and its derivative in `log β`.
    fn normalizer(&self, beta: f64) -> (f64, f64) {
        let n = self.n() as f64;
        match self.calibration_lambda {
            None => (-0.5 * n * beta.ln(), -0.5 * n),
            Some(lambda) => {
                let t = self.tau;
                let d = t * beta + 2.0 * lambda * (t + beta);
                let dlogm = 1.0 - 0.5 * beta * (t + 2.0 * lambda) / d;
                (-n * calibration_m(beta, t, lambda).ln(), -n * dlogm)
            }
        }
    }
}

/// Mean and per-coordinate variance of `z | β` under the bridged posterior.
///
/// The mean is `ẑ_β`; the precision is `a + 2λa²` with `a = 1/τ + 1/β`.
pub fn conditional_z_posterior_params(beta: f64, y: &[f64], tau: f64, lambda: f64) -> Result<(Vec<f64>, f64)> {
    if !(beta > 0.0 && tau > 0.0) {
        return Err(Error::InvalidArgument("beta and tau must be positive".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    let s = 1.0 - tau / (tau + beta);
    let a = 1.0 / tau + 1.0 / beta;
    Ok((y.iter().map(|v| s * v).collect(), 1.0 / (a + 2.0 * lambda * a * a)))
}

impl BridgeProblem for NormalMeansModel {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn dim_beta(&self) -> usize {
        1
    }

    fn dim_z(&self) -> usize {
        self.n()
    }

    fn check_domain(&self, beta: &[f64], z: &[f64]) -> std::result::Result<(), DomainError> {
        let b = Self::beta(beta);
        if !(b > 0.0 && b.is_finite()) {
            return Err(DomainError::new("beta", format!("beta = {b} is not a positive finite value")));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(DomainError::new("z", "non-finite entry"));
        }
        Ok(())
    }

    fn log_g(&self, beta: &[f64], z: &[f64]) -> f64 {
        let b = Self::beta(beta);
        let (norm, _) = self.normalizer(b);
        let fit: f64 = z.iter().zip(&self.y).map(|(zi, yi)| (yi - zi).powi(2)).sum();
        let ss: f64 = z.iter().map(|v| v * v).sum();
        -fit / (2.0 * self.tau) - ss / (2.0 * b) + norm
    }

    fn grad_log_g(&self, beta: &[f64], z: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let b = Self::beta(beta);
        let (_, dnorm) = self.normalizer(b);
        let ss: f64 = z.iter().map(|v| v * v).sum();
        let gb = DVector::from_element(1, ss / (2.0 * b) + dnorm);
        let gz = DVector::from_iterator(
            z.len(),
            z.iter().zip(&self.y).map(|(zi, yi)| (yi - zi) / self.tau - zi / b),
        );
        (gb, gz)
    }

    fn grad_h(&self, beta: &[f64], z: &[f64]) -> DVector<f64> {
        let b = Self::beta(beta);
        DVector::from_iterator(
            z.len(),
            z.iter().zip(&self.y).map(|(zi, yi)| (zi - yi) / self.tau + zi / b),
        )
    }

    fn hess_zz(&self, beta: &[f64], z: &[f64]) -> DMatrix<f64> {
        let b = Self::beta(beta);
        DMatrix::identity(z.len(), z.len()) * (1.0 / self.tau + 1.0 / b)
    }

    fn hess_zbeta(&self, beta: &[f64], z: &[f64]) -> DMatrix<f64> {
        let b = Self::beta(beta);
        DMatrix::from_iterator(z.len(), 1, z.iter().map(|zi| -zi / b))
    }

    fn kernel_vjp(&self, beta: &[f64], z: &[f64], v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let b = Self::beta(beta);
        let a = 1.0 / self.tau + 1.0 / b;
        let kb: f64 = z.iter().zip(v.iter()).map(|(zi, vi)| -zi / b * vi).sum();
        (DVector::from_element(1, kb), v * a)
    }

    fn log_prior(&self, beta: &[f64]) -> f64 {
        let l = beta[0];
        -self.prior_shape * l - self.prior_scale * (-l).exp()
    }

    fn grad_log_prior(&self, beta: &[f64]) -> DVector<f64> {
        DVector::from_element(1, -self.prior_shape + self.prior_scale * (-beta[0]).exp())
    }

    fn loss(&self, beta: &[f64], z: &[f64]) -> Option<f64> {
        let b = Self::beta(beta);
        let fit: f64 = z.iter().zip(&self.y).map(|(zi, yi)| (zi - yi).powi(2)).sum();
        let ss: f64 = z.iter().map(|v| v * v).sum();
        Some(fit / (2.0 * self.tau) + ss / (2.0 * b))
    }

    fn grad_loss(&self, beta: &[f64], z: &[f64]) -> Option<(DVector<f64>, DVector<f64>)> {
        let b = Self::beta(beta);
        let ss: f64 = z.iter().map(|v| v * v).sum();
        Some((DVector::from_element(1, -ss / (2.0 * b)), self.grad_h(beta, z)))
    }

    fn initial_point(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        out.extend(self.minimizer(1.0));
        out
    }
}
