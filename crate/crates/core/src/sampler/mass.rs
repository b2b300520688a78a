//! Inverse mass matrices for the leapfrog integrator.
//!
//! Every variant is stored in structured form so that products with `M⁻¹`,
//! momentum draws and the kinetic energy cost `O(dim · rank)` at most.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, SVD};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Ridge used by the projection mass matrix.
pub const DEFAULT_TAU_RIDGE: f64 = 1e-3;

/// Singular values below this fraction of the largest are treated as zero.
const RANK_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassMode {
    Identity,
    Projection,
    Diagonal,
}

#[derive(Debug, Clone)]
enum Structure {
    /// `M⁻¹ = c I`
    Scaled(f64),
    /// `M⁻¹ = diag(d)`
    Diagonal(DVector<f64>),
    /// `M⁻¹ = (1 + τ) I − Q Qᵀ` with orthonormal `Q`.
    Projection { basis: DMatrix<f64>, tau: f64 },
}

#[derive(Debug, Clone)]
pub struct MassSpec {
    dim: usize,
    mode: MassMode,
    structure: Structure,
    warnings: Vec<String>,
}

impl MassSpec {
    pub fn identity(dim: usize) -> Self {
        Self::scaled(dim, 1.0)
    }

    fn scaled(dim: usize, c: f64) -> Self {
        Self {
            dim,
            mode: MassMode::Identity,
            structure: Structure::Scaled(c),
            warnings: Vec::new(),
        }
    }

    /// `M⁻¹ = diag(inv_diag)`; every entry must be positive and finite.
    pub fn diagonal(inv_diag: Vec<f64>) -> Result<Self> {
        if let Some(v) = inv_diag.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidArgument(format!("diagonal inverse mass entry {v} is not positive")));
        }
        Ok(Self {
            dim: inv_diag.len(),
            mode: MassMode::Diagonal,
            structure: Structure::Diagonal(DVector::from_vec(inv_diag)),
            warnings: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> MassMode {
        self.mode
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Rank of the projected subspace (zero for non-projection modes).
    pub fn rank(&self) -> usize {
        match &self.structure {
            Structure::Projection { basis, .. } => basis.ncols(),
            _ => 0,
        }
    }

    /// Diagonal of `M⁻¹`.
    pub fn inv_diag(&self) -> Vec<f64> {
        match &self.structure {
            Structure::Scaled(c) => vec![*c; self.dim],
            Structure::Diagonal(d) => d.as_slice().to_vec(),
            Structure::Projection { basis, tau } => (0..self.dim)
                .map(|i| 1.0 + tau - basis.row(i).norm_squared())
                .collect(),
        }
    }

    /// `out = M⁻¹ p`.
    pub fn inv_mass_mul(&self, p: &[f64], out: &mut [f64]) {
        match &self.structure {
            Structure::Scaled(c) => {
                for (o, v) in out.iter_mut().zip(p) {
                    *o = c * v;
                }
            }
            Structure::Diagonal(d) => {
                for ((o, v), di) in out.iter_mut().zip(p).zip(d.iter()) {
                    *o = di * v;
                }
            }
            Structure::Projection { basis, tau } => {
                let pv = DVector::from_column_slice(p);
                let coef = basis.tr_mul(&pv);
                let proj = basis * coef;
                for i in 0..self.dim {
                    out[i] = (1.0 + tau) * p[i] - proj[i];
                }
            }
        }
    }

    /// `½ pᵀ M⁻¹ p`.
    pub fn kinetic_energy(&self, p: &[f64]) -> f64 {
        match &self.structure {
            Structure::Scaled(c) => 0.5 * c * p.iter().map(|v| v * v).sum::<f64>(),
            Structure::Diagonal(d) => 0.5 * p.iter().zip(d.iter()).map(|(v, di)| di * v * v).sum::<f64>(),
            Structure::Projection { basis, tau } => {
                let pv = DVector::from_column_slice(p);
                let coef = basis.tr_mul(&pv);
                0.5 * ((1.0 + tau) * pv.norm_squared() - coef.norm_squared())
            }
        }
    }

    /// Draws `p ~ N(0, M)`.
    pub fn draw_momentum<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        match &self.structure {
            Structure::Scaled(c) => {
                let s = 1.0 / c.sqrt();
                out.iter_mut().for_each(|v| *v *= s);
            }
            Structure::Diagonal(d) => {
                for (v, di) in out.iter_mut().zip(d.iter()) {
                    *v /= di.sqrt();
                }
            }
            Structure::Projection { basis, tau } => {
                // M = QQᵀ/τ + (I − QQᵀ)/(1 + τ), so M^{1/2} has the same eigenvectors.
                let xi = DVector::from_column_slice(out);
                let coef = basis.tr_mul(&xi);
                let proj = basis * coef;
                let a = 1.0 / (1.0 + tau).sqrt();
                let b = 1.0 / tau.sqrt() - a;
                for i in 0..self.dim {
                    out[i] = a * xi[i] + b * proj[i];
                }
            }
        }
    }

    /// Dense `M⁻¹`.
    pub fn inv_mass(&self) -> DMatrix<f64> {
        match &self.structure {
            Structure::Scaled(c) => DMatrix::identity(self.dim, self.dim) * *c,
            Structure::Diagonal(d) => DMatrix::from_diagonal(d),
            Structure::Projection { basis, tau } => {
                DMatrix::identity(self.dim, self.dim) * (1.0 + tau) - basis * basis.transpose()
            }
        }
    }

    /// Dense `M = (M⁻¹)⁻¹`.
    pub fn mass(&self) -> DMatrix<f64> {
        match &self.structure {
            Structure::Scaled(c) => DMatrix::identity(self.dim, self.dim) / *c,
            Structure::Diagonal(d) => DMatrix::from_diagonal(&d.map(|v| 1.0 / v)),
            Structure::Projection { basis, tau } => {
                let qqt = basis * basis.transpose();
                let a = 1.0 / (1.0 + tau);
                DMatrix::identity(self.dim, self.dim) * a + qqt * (1.0 / tau - a)
            }
        }
    }

    /// Lower Cholesky factor `L` with `L Lᵀ = M`.
    pub fn mass_chol(&self) -> DMatrix<f64> {
        Cholesky::new(self.mass())
            .expect("mass matrix is positive definite by construction")
            .l()
    }
}

/// Builds `M⁻¹ = (1 + τ) I − Ĝ (ĜᵀĜ)⁻¹ Ĝᵀ` for a `dim × k` matrix `Ĝ`.
///
/// The projector is formed from an orthonormal basis of `col(Ĝ)` taken from a
/// thin SVD, so `ĜᵀĜ` is never inverted. Directions whose singular value falls
/// below `1e-10 · σ_max` are dropped with a warning. An all-zero or empty `Ĝ`
/// gives `(1 + τ) I` in identity mode.
pub fn build_mass_inverse(g_hat: &DMatrix<f64>, tau_ridge: f64) -> Result<MassSpec> {
    if !(tau_ridge > 0.0 && tau_ridge.is_finite()) {
        return Err(Error::InvalidArgument(format!("tau_ridge must be > 0, got {tau_ridge}")));
    }
    if g_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("G_hat has non-finite entries".into()));
    }
    let dim = g_hat.nrows();
    let k = g_hat.ncols();
    if k == 0 || g_hat.iter().all(|v| *v == 0.0) {
        return Ok(MassSpec::scaled(dim, 1.0 + tau_ridge));
    }
    let svd = SVD::new(g_hat.clone(), true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > RANK_RTOL * smax)
        .collect();
    let mut warnings = Vec::new();
    if keep.len() < k {
        warnings.push(format!(
            "G_hat is rank deficient: kept {} of {} columns",
            keep.len(),
            k
        ));
    }
    let basis = u.select_columns(keep.iter());
    Ok(MassSpec {
        dim,
        mode: MassMode::Projection,
        structure: Structure::Projection { basis, tau: tau_ridge },
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn zero_columns_give_scaled_identity() {
        let m = build_mass_inverse(&DMatrix::zeros(4, 0), 1e-3).unwrap();
        assert_eq!(m.mode(), MassMode::Identity);
        assert_eq!(m.inv_mass(), DMatrix::identity(4, 4) * 1.001);
        let z = build_mass_inverse(&DMatrix::zeros(4, 2), 1e-3).unwrap();
        assert_eq!(z.mode(), MassMode::Identity);
    }

    #[test]
    fn first_basis_vector() {
        let mut g = DMatrix::zeros(3, 1);
        g[(0, 0)] = 1.0;
        let m = build_mass_inverse(&g, 1e-3).unwrap();
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![1e-3, 1.001, 1.001]));
        assert!((m.inv_mass() - expect).abs().max() < 1e-15);
    }

    #[test]
    fn ghat_is_shrunk_to_tau() {
        let g = random_matrix(6, 2, 1);
        let tau = 1e-3;
        let m = build_mass_inverse(&g, tau).unwrap();
        let lhs = m.inv_mass() * &g;
        let rhs = &g * tau;
        assert!((lhs - &rhs).abs().max() <= 1e-10 * rhs.abs().max());
    }

    #[test]
    fn spectrum_is_two_valued() {
        let tau = 1e-3;
        for seed in 0..5 {
            let g = random_matrix(7, 3, seed);
            let m = build_mass_inverse(&g, tau).unwrap();
            let mut ev: Vec<f64> = SymmetricEigen::new(m.inv_mass()).eigenvalues.iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            for (i, v) in ev.iter().enumerate() {
                let target = if i < 3 { tau } else { 1.0 + tau };
                assert!((v - target).abs() < 1e-9, "{ev:?}");
            }
        }
    }

    #[test]
    fn rank_deficient_columns_are_pruned() {
        let a = random_matrix(5, 1, 3);
        let mut g = DMatrix::zeros(5, 2);
        g.set_column(0, &a.column(0));
        g.set_column(1, &(a.column(0) * 2.0));
        let m = build_mass_inverse(&g, 1e-3).unwrap();
        assert_eq!(m.rank(), 1);
        assert_eq!(m.warnings().len(), 1);
    }

    #[test]
    fn cholesky_factor_inverts_inv_mass() {
        let g = random_matrix(6, 2, 9);
        let m = build_mass_inverse(&g, 1e-3).unwrap();
        let l = m.mass_chol();
        let prod = &l * l.transpose() * m.inv_mass();
        assert!((prod - DMatrix::identity(6, 6)).abs().max() < 1e-8);
    }

    #[test]
    fn structured_products_match_dense() {
        let g = random_matrix(5, 2, 4);
        let m = build_mass_inverse(&g, 1e-3).unwrap();
        let p = [0.3, -1.2, 0.5, 2.0, -0.7];
        let mut out = [0.0; 5];
        m.inv_mass_mul(&p, &mut out);
        let dense = m.inv_mass() * DVector::from_column_slice(&p);
        for i in 0..5 {
            assert!((out[i] - dense[i]).abs() < 1e-12);
        }
        let ke = 0.5 * DVector::from_column_slice(&p).dot(&dense);
        assert!((m.kinetic_energy(&p) - ke).abs() < 1e-12);
        let diag = m.inv_diag();
        for i in 0..5 {
            assert!((diag[i] - m.inv_mass()[(i, i)]).abs() < 1e-12);
        }
    }

    #[test]
    fn momentum_covariance_matches_mass() {
        let g = random_matrix(3, 1, 2);
        let m = build_mass_inverse(&g, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let mut cov = DMatrix::<f64>::zeros(3, 3);
        let mut p = [0.0; 3];
        for _ in 0..n {
            m.draw_momentum(&mut rng, &mut p);
            let v = DVector::from_column_slice(&p);
            cov += &v * v.transpose();
        }
        cov /= n as f64;
        let target = m.mass();
        assert!((cov - &target).abs().max() < 0.03 * target.abs().max());
    }

    #[test]
    fn diagonal_rejects_nonpositive() {
        assert!(MassSpec::diagonal(vec![1.0, 0.0]).is_err());
        let d = MassSpec::diagonal(vec![2.0, 0.5]).unwrap();
        assert_eq!(d.kinetic_energy(&[1.0, 2.0]), 0.5 * (2.0 + 2.0));
    }
}
