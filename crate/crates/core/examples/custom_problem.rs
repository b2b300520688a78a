//! Implementing `BridgeProblem` for a new model.
//!
//! A penalized robust location `z = argmin_z Σ log cosh(z − y_i) + β z²/2`
//! feeds a second, noisy measurement `w ~ N(z, 1)`. The sampler sees
//! `[log β, z]`.

use gradbridge::bridge::{BridgeProblem, BridgedPosterior, KernelConfig};
use gradbridge::diagnostics::summarize;
use gradbridge::layout::{Layout, Transform};
use gradbridge::sampler::{build_mass_inverse, find_posterior_mode, nuts_sample, ModeOptions, SamplerConfig};
use gradbridge::DomainError;
use nalgebra::{DMatrix, DVector};

struct RobustLocation {
    y: Vec<f64>,
    w: f64,
    layout: Layout,
}

impl RobustLocation {
    fn new(y: Vec<f64>, w: f64) -> Self {
        let layout = Layout::new()
            .push("beta", 1, Transform::Log)
            .push("z", 1, Transform::Identity);
        Self { y, w, layout }
    }
}

impl BridgeProblem for RobustLocation {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn dim_beta(&self) -> usize {
        1
    }

    fn dim_z(&self) -> usize {
        1
    }

    fn check_domain(&self, beta: &[f64], z: &[f64]) -> Result<(), DomainError> {
        if !beta[0].is_finite() {
            return Err(DomainError::new("beta", "non-finite log scale"));
        }
        if !z[0].is_finite() {
            return Err(DomainError::new("z", "non-finite location"));
        }
        Ok(())
    }

    fn log_g(&self, _beta: &[f64], z: &[f64]) -> f64 {
        -0.5 * (self.w - z[0]).powi(2)
    }

    fn grad_log_g(&self, _beta: &[f64], z: &[f64]) -> (DVector<f64>, DVector<f64>) {
        (DVector::zeros(1), DVector::from_element(1, self.w - z[0]))
    }

    fn grad_h(&self, beta: &[f64], z: &[f64]) -> DVector<f64> {
        let s: f64 = self.y.iter().map(|y| (z[0] - y).tanh()).sum();
        DVector::from_element(1, s + beta[0].exp() * z[0])
    }

    fn hess_zz(&self, beta: &[f64], z: &[f64]) -> DMatrix<f64> {
        let s: f64 = self.y.iter().map(|y| 1.0 / (z[0] - y).cosh().powi(2)).sum();
        DMatrix::from_element(1, 1, s + beta[0].exp())
    }

    fn hess_zbeta(&self, beta: &[f64], z: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, beta[0].exp() * z[0])
    }

    fn log_prior(&self, beta: &[f64]) -> f64 {
        -0.5 * beta[0] * beta[0]
    }

    fn grad_log_prior(&self, beta: &[f64]) -> DVector<f64> {
        DVector::from_element(1, -beta[0])
    }

    fn initial_point(&self) -> Vec<f64> {
        vec![0.0, self.y.iter().sum::<f64>() / self.y.len() as f64]
    }
}

fn main() -> gradbridge::Result<()> {
    let problem = RobustLocation::new(vec![0.8, 1.1, 1.3, 0.9, 6.0], 1.2);
    let cfg = KernelConfig::with_lambda(100.0);
    let posterior = BridgedPosterior::new(&problem, cfg);

    let mode = find_posterior_mode(&posterior, &problem.initial_point(), ModeOptions::default());
    let (b, z) = problem.split(&mode.point);
    let mass = build_mass_inverse(&problem.g_matrix(b, z), 1e-3)?;
    println!("mode {:?}, |grad h| there {:.2e}", mode.point, problem.grad_h(b, z).norm());

    let sampler = SamplerConfig {
        n_iterations: 4000,
        n_burnin: 1000,
        thin: 1,
        seed: 11,
        init: Some(mode.point),
        ..Default::default()
    };
    let chain = nuts_sample(&posterior, &sampler, &mass)?;
    for row in &summarize(&chain).rows {
        println!(
            "{:<8} mean {:>8.4}  sd {:>7.4}  95% [{:.3}, {:.3}]  ess {:.0}",
            row.name, row.mean, row.sd, row.q025, row.q975, row.ess
        );
    }
    println!("divergences {}", chain.divergence_count());
    Ok(())
}
