use super::mass::MassSpec;
use super::LogDensity;
use crate::error::DomainError;
use nalgebra::{DMatrix, DVector};

/// Position, momentum and the cached log density and gradient at the position.
#[derive(Debug, Clone)]
pub struct PhasePoint {
    pub theta: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

impl PhasePoint {
    pub fn at<D: LogDensity + ?Sized>(target: &D, theta: Vec<f64>) -> Result<Self, DomainError> {
        let mut grad = vec![0.0; theta.len()];
        let logp = target.log_density_grad(&theta, &mut grad)?;
        let p = vec![0.0; theta.len()];
        Ok(Self { theta, p, grad, logp })
    }

    /// `H = −log Π(θ) + ½ pᵀ M⁻¹ p`.
    pub fn hamiltonian(&self, mass: &MassSpec) -> f64 {
        -self.logp + mass.kinetic_energy(&self.p)
    }
}

/// One leapfrog step of size `eps` (negative to integrate backwards), in place.
///
/// Fails when the new position is outside the domain or its log density or
/// gradient is not finite. `z` is left in an unspecified state on failure.
pub fn leapfrog<D: LogDensity + ?Sized>(
    target: &D,
    mass: &MassSpec,
    z: &mut PhasePoint,
    eps: f64,
    scratch: &mut [f64],
) -> Result<(), DomainError> {
    let half = 0.5 * eps;
    for (p, g) in z.p.iter_mut().zip(&z.grad) {
        *p += half * g;
    }
    mass.inv_mass_mul(&z.p, scratch);
    for (t, v) in z.theta.iter_mut().zip(scratch.iter()) {
        *t += eps * v;
    }
    z.logp = target.log_density_grad(&z.theta, &mut z.grad)?;
    if !z.logp.is_finite() || z.grad.iter().any(|g| !g.is_finite()) {
        return Err(DomainError::new("theta", "non-finite log density or gradient"));
    }
    for (p, g) in z.p.iter_mut().zip(&z.grad) {
        *p += half * g;
    }
    Ok(())
}

/// A single leapfrog step with a dense inverse mass and a bare gradient map.
///
/// Returns `None` when the gradient at the new position is not finite.
pub fn leapfrog_step(
    position: &[f64],
    momentum: &[f64],
    eps: f64,
    inv_mass: &DMatrix<f64>,
    grad_logpost: impl Fn(&[f64]) -> Vec<f64>,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let g0 = DVector::from_vec(grad_logpost(position));
    let p_half = DVector::from_column_slice(momentum) + &g0 * (0.5 * eps);
    let theta = DVector::from_column_slice(position) + inv_mass * &p_half * eps;
    let g1 = DVector::from_vec(grad_logpost(theta.as_slice()));
    if g1.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let p = p_half + g1 * (0.5 * eps);
    Some((theta.as_slice().to_vec(), p.as_slice().to_vec()))
}
