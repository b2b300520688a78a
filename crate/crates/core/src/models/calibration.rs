//! Marginalization calibration for the normal-means model.
//!
//! Adding one observation multiplies the bridged likelihood by
//!
//! ```text
//! ∫∫ g(y_{n+1} | β, z_{n+1}) exp{−λ ((z−y)/τ + z/β)²} dy dz,
//! ```
//!
//! which depends on `β` unless the normalizer `β^{-1/2}` of `g` is replaced by
//! `1/m(β)`.

use quadrature::double_exponential;

/// `m(β) = τβ {τβ + 2λ(τ + β)}^{-1/2}`.
pub fn calibration_m(beta: f64, tau: f64, lambda: f64) -> f64 {
    tau * beta / (tau * beta + 2.0 * lambda * (tau + beta)).sqrt()
}

/// Numerically integrates the one-observation increment over `(y, z)`.
///
/// With `calibrated` the normalizer of `g` is `1/m(β)`, otherwise `β^{-1/2}`.
/// The `(2πτ)^{-1/2}` constant is dropped in both cases.
pub fn marginal_increment(beta: f64, tau: f64, lambda: f64, calibrated: bool) -> f64 {
    let norm = if calibrated {
        1.0 / calibration_m(beta, tau, lambda)
    } else {
        beta.powf(-0.5)
    };
    // integrate over z and u = y − z on windows of 12 sd around each peak
    let pu = 1.0 / tau + 2.0 * lambda / (tau * tau);
    let cu = 2.0 * lambda / (beta * tau);
    let pz = 1.0 / beta + 2.0 * lambda / (beta * beta) - cu * cu / pu;
    let lz = 12.0 / pz.sqrt();
    let lu = 12.0 / pu.sqrt();
    let outer = double_exponential::integrate(
        |z| {
            let mu = cu * z / pu;
            double_exponential::integrate(
                |u| {
                    let grad = -u / tau + z / beta;
                    (-u * u / (2.0 * tau) - z * z / (2.0 * beta) - lambda * grad * grad).exp()
                },
                mu - lu,
                mu + lu,
                1e-14,
            )
            .integral
        },
        -lz,
        lz,
        1e-13,
    );
    norm * outer.integral
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn m_values() {
        assert!((calibration_m(2.0, 3.0, 0.0) - 6f64.sqrt()).abs() < 1e-14);
        assert!((calibration_m(1.0, 1.0, 1.0) - 1.0 / 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn quadrature_matches_closed_form() {
        // ∫∫ = 2π m(β), so the uncalibrated increment is 2π m(β)/√β
        for (beta, tau, lambda) in [(0.5, 1.0, 1.0), (2.0, 0.7, 10.0), (1.0, 1.0, 0.0)] {
            let q = marginal_increment(beta, tau, lambda, false);
            let exact = 2.0 * PI * calibration_m(beta, tau, lambda) / beta.sqrt();
            assert!((q / exact - 1.0).abs() < 1e-8, "{q} vs {exact}");
        }
    }

    #[test]
    fn calibrated_increment_is_constant() {
        for lambda in [1.0, 100.0] {
            let vals: Vec<f64> = [0.5, 1.0, 2.0].iter().map(|b| marginal_increment(*b, 1.0, lambda, true)).collect();
            for v in &vals {
                assert!((v / vals[1] - 1.0).abs() < 1e-4, "{vals:?}");
            }
            let raw: Vec<f64> = [0.5, 1.0, 2.0].iter().map(|b| marginal_increment(*b, 1.0, lambda, false)).collect();
            let spread = raw.iter().cloned().fold(f64::MIN, f64::max) / raw.iter().cloned().fold(f64::MAX, f64::min);
            assert!(spread > 1.01);
        }
    }
}
