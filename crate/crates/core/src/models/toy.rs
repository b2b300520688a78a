//! The joint-versus-partial minimization example:
//! `h(β, z; y) = τ₁‖z − β‖² + τ₂‖y − z‖²/2` with `β, z, y ∈ ℝ^d`.
//!
//! Partial minimization over `z` gives `(2τ₁β + τ₂y)/(2τ₁ + τ₂)`, whereas a
//! Gibbs posterior on `h` itself concentrates at `β = z = y`.

use crate::bridge::BridgeProblem;
use crate::error::{DomainError, Error, Result};
use crate::layout::{Layout, Transform};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct ToyModel {
    tau1: f64,
    tau2: f64,
    y: Vec<f64>,
    /// Standard deviation of an optional `N(0, s²)` prior on each `β_i`; the
    /// prior is flat when `None`.
    prior_sd: Option<f64>,
    layout: Layout,
}

impl ToyModel {
    pub fn new(tau1: f64, tau2: f64, y: Vec<f64>) -> Result<Self> {
        if !(tau1 > 0.0 && tau2 > 0.0) {
            return Err(Error::InvalidArgument("tau1 and tau2 must be positive".into()));
        }
        let d = y.len();
        Ok(Self {
            tau1,
            tau2,
            y,
            prior_sd: None,
            layout: Layout::new()
                .push("beta", d, Transform::Identity)
                .push("z", d, Transform::Identity),
        })
    }

    pub fn with_prior_sd(mut self, sd: f64) -> Self {
        self.prior_sd = Some(sd);
        self
    }

    /// `(2τ₁β + τ₂y)/(2τ₁ + τ₂)`.
    pub fn partial_minimizer(&self, beta: &[f64]) -> Vec<f64> {
        let s = 2.0 * self.tau1 + self.tau2;
        beta.iter()
            .zip(&self.y)
            .map(|(b, y)| (2.0 * self.tau1 * b + self.tau2 * y) / s)
            .collect()
    }
}

impl BridgeProblem for ToyModel {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn dim_beta(&self) -> usize {
        self.y.len()
    }

    fn dim_z(&self) -> usize {
        self.y.len()
    }

    fn check_domain(&self, beta: &[f64], z: &[f64]) -> std::result::Result<(), DomainError> {
        if beta.iter().chain(z).any(|v| !v.is_finite()) {
            return Err(DomainError::new("beta", "non-finite entry"));
        }
        Ok(())
    }

    fn log_g(&self, _beta: &[f64], _z: &[f64]) -> f64 {
        0.0
    }

    fn grad_log_g(&self, beta: &[f64], z: &[f64]) -> (DVector<f64>, DVector<f64>) {
        (DVector::zeros(beta.len()), DVector::zeros(z.len()))
    }

    fn grad_h(&self, beta: &[f64], z: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            z.len(),
            (0..z.len()).map(|i| 2.0 * self.tau1 * (z[i] - beta[i]) - self.tau2 * (self.y[i] - z[i])),
        )
    }

    fn hess_zz(&self, _beta: &[f64], z: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(z.len(), z.len()) * (2.0 * self.tau1 + self.tau2)
    }

    fn hess_zbeta(&self, beta: &[f64], z: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(z.len(), beta.len()) * (-2.0 * self.tau1)
    }

    fn log_prior(&self, beta: &[f64]) -> f64 {
        match self.prior_sd {
            Some(s) => -beta.iter().map(|b| b * b).sum::<f64>() / (2.0 * s * s),
            None => 0.0,
        }
    }

    fn grad_log_prior(&self, beta: &[f64]) -> DVector<f64> {
        match self.prior_sd {
            Some(s) => DVector::from_iterator(beta.len(), beta.iter().map(|b| -b / (s * s))),
            None => DVector::zeros(beta.len()),
        }
    }

    fn loss(&self, beta: &[f64], z: &[f64]) -> Option<f64> {
        let mut h = 0.0;
        for i in 0..z.len() {
            h += self.tau1 * (z[i] - beta[i]).powi(2) + self.tau2 * (self.y[i] - z[i]).powi(2) / 2.0;
        }
        Some(h)
    }

    fn grad_loss(&self, beta: &[f64], z: &[f64]) -> Option<(DVector<f64>, DVector<f64>)> {
        let gb = DVector::from_iterator(beta.len(), (0..beta.len()).map(|i| -2.0 * self.tau1 * (z[i] - beta[i])));
        Some((gb, self.grad_h(beta, z)))
    }

    fn initial_point(&self) -> Vec<f64> {
        vec![0.0; 2 * self.y.len()]
    }
}
