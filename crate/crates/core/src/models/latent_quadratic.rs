//! Latent Gaussian binary classification in dual form.
//!
//! The primal loss `h(z) = ½ zᵀQ⁻¹z − Σ{y_i z_i − log(1 + e^{z_i})}` needs
//! `Q⁻¹`. Splitting the quadratic and logistic parts gives the dual
//!
//! ```text
//! h†(α) = −½ αᵀQα − Σ{p_i log p_i + (1 − p_i) log(1 − p_i)},   p = α + y,
//! ∇_α h† = −Qα − log p + log(1 − p),
//! ```
//!
//! whose maximizer maps back through `ẑ = −Qα̂`. Only products with `Q`
//! appear anywhere below.

use crate::bridge::BridgeProblem;
use crate::error::{DomainError, Error, Result};
use crate::layout::{logistic, Layout, Transform};
use nalgebra::{Cholesky, DMatrix, DVector};

/// `Q_ij = τ exp{−‖x_i − x_j‖² / (2b)}` for locations in the rows of `x`.
pub fn gaussian_kernel_matrix(x: &DMatrix<f64>, tau: f64, b: f64) -> Result<DMatrix<f64>> {
    if !(tau > 0.0 && b > 0.0) {
        return Err(Error::InvalidArgument("kernel needs tau, b > 0".into()));
    }
    Ok(squared_distances(x).map(|d2| tau * (-d2 / (2.0 * b)).exp()))
}

fn squared_distances(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    DMatrix::from_fn(n, n, |i, j| (x.row(i) - x.row(j)).norm_squared())
}

fn check_probabilities(alpha: &DVector<f64>, y: &[f64]) -> std::result::Result<DVector<f64>, DomainError> {
    let p = DVector::from_iterator(alpha.len(), alpha.iter().zip(y).map(|(a, y)| a + y));
    if let Some(i) = p.iter().position(|v| !(*v > 0.0 && *v < 1.0)) {
        return Err(DomainError::new("alpha", format!("alpha[{i}] + y[{i}] = {} is outside (0, 1)", p[i])));
    }
    Ok(p)
}

/// `h†(α)` and `∇_α h†`.
pub fn latent_quadratic_dual(alpha: &DVector<f64>, y: &[f64], q: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    if alpha.len() != y.len() || q.shape() != (y.len(), y.len()) {
        return Err(Error::InvalidArgument("alpha, y and Q sizes disagree".into()));
    }
    let p = check_probabilities(alpha, y)?;
    let qa = q * alpha;
    let mut value = -0.5 * alpha.dot(&qa);
    let mut grad = -qa;
    for i in 0..p.len() {
        let (pi, qi) = (p[i], 1.0 - p[i]);
        value -= pi * pi.ln() + qi * qi.ln();
        grad[i] += -pi.ln() + qi.ln();
    }
    Ok((value, grad))
}

/// Maximizes `h†` over `α` by damped Newton, keeping `α + y` inside
/// `(0, 1)`. The Newton system `(Q + diag(1/(p(1−p)))) Δ = ∇h†` is positive
/// definite for any positive semi-definite `Q`.
pub fn solve_dual_root(y: &[f64], q: &DMatrix<f64>, tol: f64) -> Result<DVector<f64>> {
    let n = y.len();
    let mut alpha = DVector::from_iterator(n, y.iter().map(|y| 0.5 - y));
    let (mut f, mut g) = latent_quadratic_dual(&alpha, y, q)?;
    for _ in 0..200 {
        if g.amax() < tol {
            return Ok(alpha);
        }
        let p = check_probabilities(&alpha, y)?;
        let mut h = q.clone();
        for i in 0..n {
            h[(i, i)] += 1.0 / (p[i] * (1.0 - p[i]));
        }
        let step = Cholesky::new(h)
            .ok_or_else(|| Error::InvalidState("dual Newton system is not positive definite".into()))?
            .solve(&g);
        let mut s = 1.0;
        loop {
            let trial = &alpha + &step * s;
            if let Ok((ft, gt)) = latent_quadratic_dual(&trial, y, q) {
                if ft >= f + 1e-4 * s * g.dot(&step) || (ft >= f && gt.amax() < g.amax()) {
                    alpha = trial;
                    f = ft;
                    g = gt;
                    break;
                }
            }
            s *= 0.5;
            if s < 1e-16 {
                return Err(Error::InvalidState("dual Newton line search failed".into()));
            }
        }
    }
    if g.amax() < tol {
        Ok(alpha)
    } else {
        Err(Error::InvalidState(format!("dual Newton did not converge (|grad| = {:e})", g.amax())))
    }
}

/// Bridged latent-quadratic model over `[log τ, log b, η]` with
/// `η = logit(α + y)`, so the dual domain constraint always holds.
///
/// `log g = −½ αᵀQα + Σ{y_i z_i − log(1 + e^{z_i})}` at `z = −Qα`, plus the
/// log-Jacobian `Σ log p_i(1 − p_i)` of the map from `η` to `α`.
#[derive(Debug, Clone)]
pub struct LatentQuadraticModel {
    y: Vec<f64>,
    d2: DMatrix<f64>,
    prior: (f64, f64),
    layout: Layout,
}

struct Eval {
    q: DMatrix<f64>,
    /// `∂Q/∂log b`.
    qb: DMatrix<f64>,
    p: DVector<f64>,
    alpha: DVector<f64>,
    qa: DVector<f64>,
}

impl LatentQuadraticModel {
    /// Inverse-gamma prior shape and scale for both `τ` and `b`.
    pub const DEFAULT_PRIOR: (f64, f64) = (2.0, 0.1);

    /// `x` holds one location per row; `y` are 0/1 responses.
    pub fn new(x: &DMatrix<f64>, y: Vec<f64>) -> Result<Self> {
        if x.nrows() != y.len() || y.is_empty() {
            return Err(Error::InvalidArgument("need one location row per response".into()));
        }
        if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(Error::InvalidArgument("responses must be 0 or 1".into()));
        }
        let n = y.len();
        Ok(Self {
            y,
            d2: squared_distances(x),
            prior: Self::DEFAULT_PRIOR,
            layout: Layout::new()
                .push("tau", 1, Transform::Log)
                .push("b", 1, Transform::Log)
                .push("alpha_logit", n, Transform::Identity),
        })
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn kernel(&self, tau: f64, b: f64) -> DMatrix<f64> {
        self.d2.map(|d2| tau * (-d2 / (2.0 * b)).exp())
    }

    /// `α = logistic(η) − y`.
    pub fn alpha(&self, eta: &[f64]) -> DVector<f64> {
        DVector::from_iterator(eta.len(), eta.iter().zip(&self.y).map(|(e, y)| logistic(*e) - y))
    }

    /// Latent values `z = −Qα`.
    pub fn latent(&self, beta: &[f64], eta: &[f64]) -> DVector<f64> {
        -self.kernel(beta[0].exp(), beta[1].exp()) * self.alpha(eta)
    }

    fn eval(&self, beta: &[f64], eta: &[f64]) -> Eval {
        let (tau, b) = (beta[0].exp(), beta[1].exp());
        let q = self.kernel(tau, b);
        let qb = q.zip_map(&self.d2, |qij, d2| qij * d2 / (2.0 * b));
        let p = DVector::from_iterator(eta.len(), eta.iter().map(|e| logistic(*e)));
        let alpha = self.alpha(eta);
        let qa = &q * &alpha;
        Eval { q, qb, p, alpha, qa }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl BridgeProblem for LatentQuadraticModel {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn dim_beta(&self) -> usize {
        2
    }

    fn dim_z(&self) -> usize {
        self.y.len()
    }

    fn check_domain(&self, beta: &[f64], eta: &[f64]) -> std::result::Result<(), DomainError> {
        if beta.iter().any(|v| !(v.is_finite() && v.abs() < 700.0)) {
            return Err(DomainError::new("tau", "log-scale parameter out of range"));
        }
        // p must stay strictly inside (0, 1) in floating point
        if eta.iter().any(|v| !(v.is_finite() && v.abs() < 36.0)) {
            return Err(DomainError::new("alpha_logit", "alpha + y too close to the boundary"));
        }
        Ok(())
    }

    fn log_g(&self, beta: &[f64], eta: &[f64]) -> f64 {
        let e = self.eval(beta, eta);
        let mut out = -0.5 * e.alpha.dot(&e.qa);
        for i in 0..self.y.len() {
            let z = -e.qa[i];
            out += self.y[i] * z - softplus(z) + (e.p[i] * (1.0 - e.p[i])).ln();
        }
        out
    }

    fn grad_log_g(&self, beta: &[f64], eta: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let e = self.eval(beta, eta);
        let n = self.y.len();
        // r = y − σ(z) at z = −Qα
        let r = DVector::from_iterator(n, (0..n).map(|i| self.y[i] - logistic(-e.qa[i])));
        // ∂/∂α = −Qα − Q r
        let ga = -(&e.qa + &e.q * &r);
        let geta = DVector::from_iterator(n, (0..n).map(|i| ga[i] * e.p[i] * (1.0 - e.p[i]) + 1.0 - 2.0 * e.p[i]));
        // ∂/∂θ for Q' = ∂Q/∂θ: −½ αᵀQ'α − rᵀQ'α
        let qba = &e.qb * &e.alpha;
        let gtau = -0.5 * e.alpha.dot(&e.qa) - r.dot(&e.qa);
        let gb = -0.5 * e.alpha.dot(&qba) - r.dot(&qba);
        (DVector::from_vec(vec![gtau, gb]), geta)
    }

    /// `∇_α h† = −Qα − η`.
    fn grad_h(&self, beta: &[f64], eta: &[f64]) -> DVector<f64> {
        let e = self.eval(beta, eta);
        -e.qa - DVector::from_column_slice(eta)
    }

    fn hess_zz(&self, beta: &[f64], eta: &[f64]) -> DMatrix<f64> {
        let e = self.eval(beta, eta);
        let n = self.y.len();
        let dp = DVector::from_iterator(n, e.p.iter().map(|p| p * (1.0 - p)));
        let mut m = -(e.q * DMatrix::from_diagonal(&dp));
        for i in 0..n {
            m[(i, i)] -= 1.0;
        }
        m
    }

    fn hess_zbeta(&self, beta: &[f64], eta: &[f64]) -> DMatrix<f64> {
        let e = self.eval(beta, eta);
        let qba = &e.qb * &e.alpha;
        let mut m = DMatrix::zeros(self.y.len(), 2);
        m.set_column(0, &(-e.qa));
        m.set_column(1, &(-qba));
        m
    }

    fn kernel_vjp(&self, beta: &[f64], eta: &[f64], v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let e = self.eval(beta, eta);
        let qv = &e.q * v;
        let kz = DVector::from_iterator(v.len(), (0..v.len()).map(|i| -e.p[i] * (1.0 - e.p[i]) * qv[i] - v[i]));
        let kb = DVector::from_vec(vec![-v.dot(&e.qa), -v.dot(&(&e.qb * &e.alpha))]);
        (kb, kz)
    }

    fn log_prior(&self, beta: &[f64]) -> f64 {
        let (a, s) = self.prior;
        beta.iter().map(|l| -a * l - s * (-l).exp()).sum()
    }

    fn grad_log_prior(&self, beta: &[f64]) -> DVector<f64> {
        let (a, s) = self.prior;
        DVector::from_iterator(2, beta.iter().map(|l| -a + s * (-l).exp()))
    }

    /// `−h†` as a scalar loss.
    fn loss(&self, beta: &[f64], eta: &[f64]) -> Option<f64> {
        let e = self.eval(beta, eta);
        let mut h = -0.5 * e.alpha.dot(&e.qa);
        for p in e.p.iter() {
            h -= p * p.ln() + (1.0 - p) * (1.0 - p).ln();
        }
        Some(-h)
    }

    fn grad_loss(&self, beta: &[f64], eta: &[f64]) -> Option<(DVector<f64>, DVector<f64>)> {
        let e = self.eval(beta, eta);
        let n = self.y.len();
        // ∂(−h†)/∂α = Qα + η, and ∂α/∂η = p(1 − p)
        let geta = DVector::from_iterator(n, (0..n).map(|i| (e.qa[i] + eta[i]) * e.p[i] * (1.0 - e.p[i])));
        let qba = &e.qb * &e.alpha;
        let gb = DVector::from_vec(vec![0.5 * e.alpha.dot(&e.qa), 0.5 * e.alpha.dot(&qba)]);
        Some((gb, geta))
    }

    /// `τ = b = 1` and `η` at the dual root for those values.
    fn initial_point(&self) -> Vec<f64> {
        let mut out = vec![0.0, 0.0];
        let q = self.kernel(1.0, 1.0);
        match solve_dual_root(&self.y, &q, 1e-10) {
            Ok(alpha) => out.extend(
                alpha
                    .iter()
                    .zip(&self.y)
                    .map(|(a, y)| crate::layout::Transform::Logistic.to_sampling(a + y)),
            ),
            Err(_) => out.extend(std::iter::repeat_n(0.0, self.y.len())),
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::{check_gradient, grad_log_posterior, log_posterior, KernelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(n: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-6.0..6.0));
        let y = (0..n).map(|i| if (x[(i, 0)] as f64).sin() + rng.random_range(-0.5..0.5) > 0.0 { 1.0 } else { 0.0 }).collect();
        (x, y)
    }

    #[test]
    fn kernel_entries() {
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let q = gaussian_kernel_matrix(&x, 2.0, 1.0).unwrap();
        assert_eq!(q[(0, 0)], 2.0);
        assert_eq!(q[(0, 2)], 2.0);
        // ‖x_0 − x_1‖² = 2 = 2b
        assert!((q[(0, 1)] - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn zero_kernel_root_is_one_half() {
        let y = vec![0.0, 1.0, 1.0, 0.0];
        let alpha = solve_dual_root(&y, &DMatrix::zeros(4, 4), 1e-12).unwrap();
        for (a, y) in alpha.iter().zip(&y) {
            assert!((a + y - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn dual_gradient_matches_finite_differences() {
        let (x, y) = instance(20, 1);
        let q = gaussian_kernel_matrix(&x, 1.5, 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let alpha = DVector::from_iterator(20, y.iter().map(|y| rng.random_range(0.1..0.9) - y));
        let f = |a: &[f64]| latent_quadratic_dual(&DVector::from_column_slice(a), &y, &q).ok().map(|r| r.0);
        let g = |a: &[f64]| latent_quadratic_dual(&DVector::from_column_slice(a), &y, &q).unwrap().1.as_slice().to_vec();
        let report = check_gradient(f, g, alpha.as_slice(), 1e-6, 1e-5);
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn boundary_is_a_domain_error() {
        let y = [1.0, 0.0];
        let err = latent_quadratic_dual(&DVector::from_vec(vec![0.0, 0.2]), &y, &DMatrix::zeros(2, 2)).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn model_gradient_matches_finite_differences() {
        let (x, y) = instance(12, 4);
        let m = LatentQuadraticModel::new(&x, y).unwrap();
        let mut theta = m.initial_point();
        theta[0] = 0.3;
        theta[1] = -0.2;
        for (i, v) in theta.iter_mut().enumerate().skip(2) {
            *v += 0.1 * ((i % 3) as f64 - 1.0);
        }
        let cfg = KernelConfig::with_lambda(5.0);
        let f = |t: &[f64]| {
            let (b, z) = m.split(t);
            log_posterior(&m, b, z, &cfg).ok()
        };
        let g = |t: &[f64]| {
            let (b, z) = m.split(t);
            grad_log_posterior(&m, b, z, &cfg).unwrap().as_slice().to_vec()
        };
        let report = check_gradient(f, g, &theta, 1e-6, 1e-5);
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn singular_kernel_is_fine() {
        // duplicated locations make Q singular; nothing in the density needs Q⁻¹
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 0.0, 1.0, 1.0]);
        let m = LatentQuadraticModel::new(&x, vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        let theta = m.initial_point();
        let (b, z) = m.split(&theta);
        let lp = log_posterior(&m, b, z, &KernelConfig::default()).unwrap();
        assert!(lp.is_finite());
        assert!(grad_log_posterior(&m, b, z, &KernelConfig::default()).unwrap().iter().all(|v| v.is_finite()));
    }
}
