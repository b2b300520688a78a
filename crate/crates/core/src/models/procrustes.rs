//! Orthogonal Procrustes through its Lagrangian dual.
//!
//! For `min_R ‖R y − β‖²_F` subject to `RᵀR = I` with a symmetric multiplier
//! `γ`, the dual is
//!
//! ```text
//! f†(γ) = tr(βᵀβ) − tr(γ) − tr{y βᵀβ yᵀ (γ + yyᵀ)⁻¹},   ∇_γ f† = −I + R̂ᵀR̂,
//! ```
//!
//! with `R̂ = βyᵀ(γ + yyᵀ)⁻¹`. Writing `(γ + yyᵀ)⁻¹ = WWᵀ` for a lower
//! triangular `W` with positive diagonal keeps the dual finite without any
//! matrix inversion.

use crate::bridge::BridgeProblem;
use crate::error::{DomainError, Error, Result};
use crate::layout::{Layout, Transform};
use crate::sampler::{find_posterior_mode, FnDensity, ModeOptions};
use nalgebra::{Cholesky, DMatrix, DVector, SVD};

const SQRT2: f64 = std::f64::consts::SQRT_2;

fn check_factor(w: &DMatrix<f64>) -> std::result::Result<(), DomainError> {
    if !w.is_square() {
        return Err(DomainError::new("w", "W must be square"));
    }
    for i in 0..w.nrows() {
        if !(w[(i, i)] > 0.0 && w[(i, i)].is_finite()) {
            return Err(DomainError::new("w", format!("W[{i},{i}] = {} is not positive", w[(i, i)])));
        }
        for j in i + 1..w.ncols() {
            if w[(i, j)] != 0.0 {
                return Err(DomainError::new("w", "W must be lower triangular"));
            }
        }
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(DomainError::new("w", "non-finite entry"));
    }
    Ok(())
}

fn check_shapes(w: &DMatrix<f64>, beta: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if beta.shape() != y.shape() || w.nrows() != y.nrows() {
        return Err(Error::InvalidArgument(format!(
            "shape mismatch: W {:?}, beta {:?}, y {:?}",
            w.shape(),
            beta.shape(),
            y.shape()
        )));
    }
    Ok(())
}

fn lower_inverse(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    w.solve_lower_triangular(&DMatrix::identity(n, n))
        .expect("diagonal checked positive")
}

/// `f†` at `γ = (WWᵀ)⁻¹ − yyᵀ`.
pub fn procrustes_dual_value(w: &DMatrix<f64>, beta: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    check_shapes(w, beta, y)?;
    check_factor(w)?;
    // tr(γ) = ‖W⁻¹‖² − ‖y‖², tr{K WWᵀ} = ‖βyᵀW‖²
    let winv = lower_inverse(w);
    let byw = beta * y.transpose() * w;
    Ok(beta.norm_squared() + y.norm_squared() - winv.norm_squared() - byw.norm_squared())
}

/// `∇_γ f† = −I + R̂ᵀR̂` with `R̂ = βyᵀWWᵀ`.
pub fn procrustes_dual_gradient(w: &DMatrix<f64>, beta: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_shapes(w, beta, y)?;
    check_factor(w)?;
    let r = beta * y.transpose() * w * w.transpose();
    let p = r.ncols();
    Ok(r.transpose() * &r - DMatrix::identity(p, p))
}

/// Gradient of `f†` with respect to the lower-triangular entries of `W`:
/// `2(P⁻² − K)W` with `P = WWᵀ`, `K = yβᵀβyᵀ`, upper triangle zeroed.
pub fn procrustes_dual_w_gradient(w: &DMatrix<f64>, beta: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_shapes(w, beta, y)?;
    check_factor(w)?;
    let winv = lower_inverse(w);
    let pinv = winv.transpose() * &winv;
    let by = beta * y.transpose();
    let k = by.transpose() * &by;
    let mut g = (&pinv * &pinv - k) * w * 2.0;
    g.fill_upper_triangle(0.0, 1);
    Ok(g)
}

/// The primal solution `UVᵀ` from `βyᵀ = UΣVᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcrustesSolution {
    pub rotation: DMatrix<f64>,
    /// `βyᵀ` is (numerically) rank deficient, so the minimizer is not unique.
    pub degenerate: bool,
}

impl ProcrustesSolution {
    /// `‖R̂y − β‖²_F`.
    pub fn objective(&self, beta: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
        (&self.rotation * y - beta).norm_squared()
    }
}

pub fn procrustes_svd_solution(beta: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<ProcrustesSolution> {
    if beta.shape() != y.shape() {
        return Err(Error::InvalidArgument("beta and y must have the same shape".into()));
    }
    let m = beta * y.transpose();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite input".into()));
    }
    let svd = SVD::new(m, true, true);
    let sv = &svd.singular_values;
    let degenerate = sv.min() <= 1e-12 * sv.max().max(f64::MIN_POSITIVE);
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    Ok(ProcrustesSolution {
        rotation: u * vt,
        degenerate,
    })
}

/// Number of free entries in a `d × d` lower-triangular factor.
pub fn tri_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Lower-triangular factor from row-major packed entries, with diagonal
/// entries stored as logs.
pub fn unpack_factor(d: usize, packed: &[f64]) -> DMatrix<f64> {
    assert_eq!(packed.len(), tri_len(d));
    let mut w = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in 0..=i {
            w[(i, j)] = if i == j { packed[k].exp() } else { packed[k] };
            k += 1;
        }
    }
    w
}

pub fn pack_factor(w: &DMatrix<f64>) -> Vec<f64> {
    let d = w.nrows();
    let mut out = Vec::with_capacity(tri_len(d));
    for i in 0..d {
        for j in 0..=i {
            out.push(if i == j { w[(i, j)].ln() } else { w[(i, j)] });
        }
    }
    out
}

/// Packs a symmetric matrix so that the Euclidean norm of the result equals
/// the Frobenius norm of the matrix.
fn weighted_vech(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(tri_len(d));
    for i in 0..d {
        for j in 0..=i {
            out.push(if i == j { m[(i, j)] } else { SQRT2 * m[(i, j)] });
        }
    }
    out
}

/// Symmetric `V` with `⟨weighted_vech(M), v⟩ = tr(VM)` for symmetric `M`.
fn weighted_unvech(d: usize, v: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in 0..=i {
            if i == j {
                m[(i, i)] = v[k];
            } else {
                m[(i, j)] = v[k] / SQRT2;
                m[(j, i)] = v[k] / SQRT2;
            }
            k += 1;
        }
    }
    m
}

/// Result of maximizing the dual over `W`.
#[derive(Debug, Clone)]
pub struct DualOptimum {
    pub w: DMatrix<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximizes `f†` over `W` by limited-memory quasi-Newton ascent on the
/// log-Cholesky entries, starting from the factor of `(yyᵀ + I)⁻¹`.
pub fn maximize_procrustes_dual(beta: &DMatrix<f64>, y: &DMatrix<f64>, gtol: f64) -> Result<DualOptimum> {
    let d = y.nrows();
    let w0 = initial_factor(y)?;
    check_shapes(&w0, beta, y)?;
    let target = FnDensity::new(tri_len(d), |packed: &[f64], grad: &mut [f64]| {
        if packed.iter().any(|v| !v.is_finite()) || packed.iter().any(|v| v.abs() > 700.0) {
            return Err(DomainError::new("w", "entry out of range"));
        }
        let w = unpack_factor(d, packed);
        let v = procrustes_dual_value(&w, beta, y).map_err(|_| DomainError::new("w", "invalid factor"))?;
        let g = procrustes_dual_w_gradient(&w, beta, y).map_err(|_| DomainError::new("w", "invalid factor"))?;
        let mut k = 0;
        for i in 0..d {
            for j in 0..=i {
                grad[k] = if i == j { g[(i, i)] * w[(i, i)] } else { g[(i, j)] };
                k += 1;
            }
        }
        Ok(v)
    });
    let res = find_posterior_mode(
        &target,
        &pack_factor(&w0),
        ModeOptions {
            max_iters: 20_000,
            gtol,
            memory: 10,
        },
    );
    Ok(DualOptimum {
        w: unpack_factor(d, &res.point),
        value: res.log_density,
        grad_norm: res.grad_norm,
        iterations: res.iterations,
        converged: res.converged,
    })
}

/// Lower Cholesky factor of `(yyᵀ + I)⁻¹`.
pub fn initial_factor(y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = y.nrows();
    let a = y * y.transpose() + DMatrix::identity(d, d);
    let inv = Cholesky::new(a)
        .ok_or_else(|| Error::InvalidArgument("yyᵀ + I is not positive definite".into()))?
        .inverse();
    let l = Cholesky::new(inv)
        .ok_or_else(|| Error::InvalidState("(yyᵀ + I)⁻¹ lost positive definiteness".into()))?
        .l();
    Ok(l)
}

/// `−λ Σ_b ‖R_bᵀR_b − I‖²_F` with `R_b = s_b u X_bᵀ (W_bW_bᵀ)`.
pub fn procrustes_shrinkage_kernel(
    w_list: &[DMatrix<f64>],
    u: &DMatrix<f64>,
    s_list: &[f64],
    x_list: &[DMatrix<f64>],
    lambda: f64,
) -> Result<f64> {
    if w_list.len() != x_list.len() || s_list.len() != x_list.len() {
        return Err(Error::InvalidArgument("one W, s and X per batch".into()));
    }
    let mut total = 0.0;
    for ((w, s), x) in w_list.iter().zip(s_list).zip(x_list) {
        check_factor(w)?;
        if x.shape() != u.shape() || w.nrows() != u.nrows() {
            return Err(Error::InvalidArgument("batch shapes do not match u".into()));
        }
        let r = u * x.transpose() * w * w.transpose() * *s;
        let d = r.ncols();
        total += (r.transpose() * &r - DMatrix::identity(d, d)).norm_squared();
    }
    Ok(-lambda * total)
}

/// Generalized Procrustes integration of `B` batches `X_b ∈ ℝ^{d×n}`:
///
/// ```text
/// g = Π_b (σ²)^{-dn/2} exp{−‖R_b X_b − s_b u‖²_F / (2σ²)},  R_b = s_b u X_bᵀ W_bW_bᵀ,
/// ```
///
/// with the dual residuals `R_bᵀR_b − I` shrunk towards zero. Sampling vector:
/// `[log s (B), log σ², vec u (d·n, column-major), W_1, …, W_B]` where each
/// `W_b` is packed row-major with log diagonal.
#[derive(Debug, Clone)]
pub struct ProcrustesModel {
    batches: Vec<DMatrix<f64>>,
    d: usize,
    n: usize,
    layout: Layout,
}

struct Parts {
    s: Vec<f64>,
    sigma2: f64,
    u: DMatrix<f64>,
    w: Vec<DMatrix<f64>>,
}

impl ProcrustesModel {
    pub fn new(batches: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = batches.first() else {
            return Err(Error::InvalidArgument("at least one batch is required".into()));
        };
        let (d, n) = first.shape();
        if d == 0 || n == 0 {
            return Err(Error::InvalidArgument("batches must be non-empty".into()));
        }
        if batches.iter().any(|x| x.shape() != (d, n)) {
            return Err(Error::InvalidArgument("all batches must share one d × n shape".into()));
        }
        if batches.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument("batch data must be finite".into()));
        }
        let b = batches.len();
        let layout = Layout::new()
            .push("s", b, Transform::Log)
            .push("sigma2", 1, Transform::Log)
            .push("u", d * n, Transform::Identity)
            .push("w", b * tri_len(d), Transform::Identity);
        Ok(Self { batches, d, n, layout })
    }

    pub fn n_batches(&self) -> usize {
        self.batches.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.d, self.n)
    }

    pub fn batches(&self) -> &[DMatrix<f64>] {
        &self.batches
    }

    fn parts(&self, beta: &[f64], z: &[f64]) -> Parts {
        let b = self.n_batches();
        let t = tri_len(self.d);
        Parts {
            s: beta[..b].iter().map(|v| v.exp()).collect(),
            sigma2: beta[b].exp(),
            u: DMatrix::from_column_slice(self.d, self.n, &beta[b + 1..]),
            w: (0..b).map(|k| unpack_factor(self.d, &z[k * t..(k + 1) * t])).collect(),
        }
    }

    /// `s_b u X_bᵀ` and `R_b`.
    fn rotation(&self, parts: &Parts, b: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let a = &parts.u * self.batches[b].transpose() * parts.s[b];
        let w = &parts.w[b];
        let r = &a * w * w.transpose();
        (a, r)
    }

    /// Per-batch `R_b` at a full sampling vector.
    pub fn rotations(&self, theta: &[f64]) -> Vec<DMatrix<f64>> {
        let (beta, z) = self.split(theta);
        let parts = self.parts(beta, z);
        (0..self.n_batches()).map(|b| self.rotation(&parts, b).1).collect()
    }

    /// `‖R_bᵀR_b − I‖_F` per batch.
    pub fn orthogonality_errors(&self, theta: &[f64]) -> Vec<f64> {
        let d = self.d;
        self.rotations(theta)
            .iter()
            .map(|r| (r.transpose() * r - DMatrix::identity(d, d)).norm())
            .collect()
    }

    /// The unified representation `R_b X_b / s_b`, one `d × n` block per batch.
    pub fn aligned(&self, theta: &[f64]) -> Vec<DMatrix<f64>> {
        let (beta, z) = self.split(theta);
        let parts = self.parts(beta, z);
        (0..self.n_batches())
            .map(|b| self.rotation(&parts, b).1 * &self.batches[b] / parts.s[b])
            .collect()
    }

    /// Pulls a gradient `G_R` with respect to `R_b` back to
    /// `(∂/∂log s_b, ∂/∂u, ∂/∂W_b packed)`.
    fn pull_back(&self, parts: &Parts, b: usize, g_r: &DMatrix<f64>) -> (f64, DMatrix<f64>, Vec<f64>) {
        let (a, r) = self.rotation(parts, b);
        let w = &parts.w[b];
        let p = w * w.transpose();
        let g_s = g_r.dot(&r);
        let g_u = g_r * &p * &self.batches[b] * parts.s[b];
        let g_p = a.transpose() * g_r;
        let g_w = (&g_p + g_p.transpose()) * w;
        let mut packed = Vec::with_capacity(tri_len(self.d));
        for i in 0..self.d {
            for j in 0..=i {
                packed.push(if i == j { g_w[(i, i)] * w[(i, i)] } else { g_w[(i, j)] });
            }
        }
        (g_s, g_u, packed)
    }

    /// Dense Jacobian of the residual vector over `[β; z]`.
    fn residual_jacobian(&self, beta: &[f64], z: &[f64]) -> DMatrix<f64> {
        let m = self.dim_z();
        let mut jac = DMatrix::zeros(m, beta.len() + z.len());
        let mut e = DVector::zeros(m);
        for i in 0..m {
            e[i] = 1.0;
            let (kb, kz) = self.kernel_vjp(beta, z, &e);
            e[i] = 0.0;
            for (j, v) in kb.iter().chain(kz.iter()).enumerate() {
                jac[(i, j)] = *v;
            }
        }
        jac
    }
}

impl BridgeProblem for ProcrustesModel {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn dim_beta(&self) -> usize {
        self.n_batches() + 1 + self.d * self.n
    }

    fn dim_z(&self) -> usize {
        self.n_batches() * tri_len(self.d)
    }

    fn check_domain(&self, beta: &[f64], z: &[f64]) -> std::result::Result<(), DomainError> {
        let b = self.n_batches();
        if beta[..=b].iter().any(|v| !(v.is_finite() && v.abs() < 700.0)) {
            return Err(DomainError::new("s", "log-scale parameter out of range"));
        }
        if beta[b + 1..].iter().any(|v| !v.is_finite()) {
            return Err(DomainError::new("u", "non-finite entry"));
        }
        let t = tri_len(self.d);
        for k in 0..b {
            let block = &z[k * t..(k + 1) * t];
            if block.iter().any(|v| !v.is_finite()) {
                return Err(DomainError::new("w", "non-finite entry"));
            }
            for i in 0..self.d {
                if block[i * (i + 1) / 2 + i].abs() > 700.0 {
                    return Err(DomainError::new("w", "log-diagonal out of range"));
                }
            }
        }
        let parts = self.parts(beta, z);
        for k in 0..b {
            if self.rotation(&parts, k).1.iter().any(|v| !v.is_finite()) {
                return Err(DomainError::new("w", format!("R_{k} has non-finite entries")));
            }
        }
        Ok(())
    }

    fn log_g(&self, beta: &[f64], z: &[f64]) -> f64 {
        let parts = self.parts(beta, z);
        let dn = (self.d * self.n) as f64;
        let mut out = 0.0;
        for b in 0..self.n_batches() {
            let (_, r) = self.rotation(&parts, b);
            let resid = r * &self.batches[b] - &parts.u * parts.s[b];
            out += -0.5 * dn * parts.sigma2.ln() - resid.norm_squared() / (2.0 * parts.sigma2);
        }
        out
    }

    fn grad_log_g(&self, beta: &[f64], z: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let parts = self.parts(beta, z);
        let nb = self.n_batches();
        let dn = (self.d * self.n) as f64;
        let t = tri_len(self.d);
        let mut gb = DVector::zeros(beta.len());
        let mut gz = DVector::zeros(z.len());
        let mut gu = DMatrix::zeros(self.d, self.n);
        let mut sse = 0.0;
        for b in 0..nb {
            let x = &self.batches[b];
            let (_, r) = self.rotation(&parts, b);
            let resid = r * x - &parts.u * parts.s[b];
            sse += resid.norm_squared();
            let g_r = -(&resid * x.transpose()) / parts.sigma2;
            let (g_s, g_u, g_w) = self.pull_back(&parts, b, &g_r);
            gb[b] = g_s + resid.dot(&parts.u) * parts.s[b] / parts.sigma2;
            gu += g_u + &resid * (parts.s[b] / parts.sigma2);
            gz.rows_mut(b * t, t).copy_from_slice(&g_w);
        }
        gb[nb] = -0.5 * dn * nb as f64 + sse / (2.0 * parts.sigma2);
        gb.rows_mut(nb + 1, self.d * self.n).copy_from_slice(gu.as_slice());
        (gb, gz)
    }

    /// Weighted `vech(R_bᵀR_b − I)` stacked over batches.
    fn grad_h(&self, beta: &[f64], z: &[f64]) -> DVector<f64> {
        let parts = self.parts(beta, z);
        let mut out = Vec::with_capacity(self.dim_z());
        for b in 0..self.n_batches() {
            let (_, r) = self.rotation(&parts, b);
            out.extend(weighted_vech(&(r.transpose() * &r - DMatrix::identity(self.d, self.d))));
        }
        DVector::from_vec(out)
    }

    fn hess_zz(&self, beta: &[f64], z: &[f64]) -> DMatrix<f64> {
        self.residual_jacobian(beta, z).columns(beta.len(), z.len()).into_owned()
    }

    fn hess_zbeta(&self, beta: &[f64], z: &[f64]) -> DMatrix<f64> {
        self.residual_jacobian(beta, z).columns(0, beta.len()).into_owned()
    }

    fn kernel_vjp(&self, beta: &[f64], z: &[f64], v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let parts = self.parts(beta, z);
        let nb = self.n_batches();
        let t = tri_len(self.d);
        let mut kb = DVector::zeros(beta.len());
        let mut kz = DVector::zeros(z.len());
        let mut ku = DMatrix::zeros(self.d, self.n);
        for b in 0..nb {
            let vb = &v.as_slice()[b * t..(b + 1) * t];
            if vb.iter().all(|x| *x == 0.0) {
                continue;
            }
            let sym = weighted_unvech(self.d, vb);
            let (_, r) = self.rotation(&parts, b);
            let g_r = r * sym * 2.0;
            let (g_s, g_u, g_w) = self.pull_back(&parts, b, &g_r);
            kb[b] = g_s;
            ku += g_u;
            kz.rows_mut(b * t, t).copy_from_slice(&g_w);
        }
        kb.rows_mut(nb + 1, self.d * self.n).copy_from_slice(ku.as_slice());
        (kb, kz)
    }

    /// Half-normal(1) on each `s_b`, inverse-gamma(2, 1) on `σ²`, standard
    /// normal on the entries of `u`.
    fn log_prior(&self, beta: &[f64]) -> f64 {
        let nb = self.n_batches();
        let mut lp = 0.0;
        for l in &beta[..nb] {
            lp += -(2.0 * l).exp() / 2.0 + l;
        }
        lp += -2.0 * beta[nb] - (-beta[nb]).exp();
        lp - beta[nb + 1..].iter().map(|v| v * v).sum::<f64>() / 2.0
    }

    fn grad_log_prior(&self, beta: &[f64]) -> DVector<f64> {
        let nb = self.n_batches();
        let mut g = DVector::zeros(beta.len());
        for k in 0..nb {
            g[k] = -(2.0 * beta[k]).exp() + 1.0;
        }
        g[nb] = -2.0 + (-beta[nb]).exp();
        for k in nb + 1..beta.len() {
            g[k] = -beta[k];
        }
        g
    }

    /// `s_b = 1`, `σ² = 1`, `u = X_1` and each `W_b` the factor of
    /// `(X_bX_bᵀ + I)⁻¹`.
    fn initial_point(&self) -> Vec<f64> {
        let nb = self.n_batches();
        let mut out = vec![0.0; nb + 1];
        out.extend_from_slice(self.batches[0].as_slice());
        for x in &self.batches {
            let w = initial_factor(x).expect("XXᵀ + I is positive definite");
            out.extend(pack_factor(&w));
        }
        out
    }

    fn derived_names(&self) -> Vec<String> {
        (0..self.n_batches()).map(|b| format!("orth_err[{b}]")).collect()
    }

    fn derived(&self, beta: &[f64], z: &[f64]) -> Vec<f64> {
        let parts = self.parts(beta, z);
        (0..self.n_batches())
            .map(|b| {
                let (_, r) = self.rotation(&parts, b);
                (r.transpose() * &r - DMatrix::identity(self.d, self.d)).norm()
            })
            .collect()
    }
}

/// Aligns every batch to the first by exact Procrustes rotation (`u = X_1`).
pub fn align_to_first(batches: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    let Some(reference) = batches.first() else {
        return Err(Error::InvalidArgument("no batches".into()));
    };
    batches
        .iter()
        .map(|x| Ok(procrustes_svd_solution(reference, x)?.rotation * x))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::{check_gradient, grad_log_posterior, log_posterior, KernelConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn gradient_of_rotation_two_identity() {
        // R̂ = βyᵀWWᵀ = 2I with β = 2y, y = I, W = I
        let y = DMatrix::identity(3, 3);
        let beta = &y * 2.0;
        let g = procrustes_dual_gradient(&DMatrix::identity(3, 3), &beta, &y).unwrap();
        assert_eq!(g, DMatrix::identity(3, 3) * 3.0);
    }

    #[test]
    fn perfect_alignment_has_zero_dual_optimum() {
        let y = DMatrix::identity(3, 3);
        let opt = maximize_procrustes_dual(&y, &y, 1e-10).unwrap();
        assert!(opt.value.abs() < 1e-8, "{}", opt.value);
    }

    #[test]
    fn dual_gradient_vanishes_at_svd_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (beta, y) = (randn(&mut rng, 3, 5), randn(&mut rng, 3, 5));
        let opt = maximize_procrustes_dual(&beta, &y, 1e-10).unwrap();
        let g = procrustes_dual_gradient(&opt.w, &beta, &y).unwrap();
        assert!(g.norm() < 1e-7, "{}", g.norm());
    }

    #[test]
    fn dual_gradient_matches_finite_differences_in_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (beta, y) = (randn(&mut rng, 3, 5), randn(&mut rng, 3, 5));
        let f = |gamma: &DMatrix<f64>| {
            let p = Cholesky::new(gamma + &y * y.transpose()).unwrap().inverse();
            let w = Cholesky::new(p).unwrap().l();
            procrustes_dual_value(&w, &beta, &y).unwrap()
        };
        let gamma = DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.1, 0.8, -0.2, 0.0, -0.2, 0.3]);
        let p = Cholesky::new(&gamma + &y * y.transpose()).unwrap().inverse();
        let w = Cholesky::new(p).unwrap().l();
        let g = procrustes_dual_gradient(&w, &beta, &y).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            for j in 0..=i {
                let mut e = DMatrix::zeros(3, 3);
                e[(i, j)] = h;
                e[(j, i)] = h;
                let num = (f(&(&gamma + &e)) - f(&(&gamma - &e))) / (2.0 * h);
                let ana = if i == j { g[(i, i)] } else { 2.0 * g[(i, j)] };
                assert!((num - ana).abs() <= 1e-5 * ana.abs().max(1.0), "{i},{j}: {num} vs {ana}");
            }
        }
    }

    #[test]
    fn svd_solution_recovers_orthogonal_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = randn(&mut rng, 3, 6);
        let q = procrustes_svd_solution(&randn(&mut rng, 3, 3), &DMatrix::identity(3, 3))
            .unwrap()
            .rotation;
        let sol = procrustes_svd_solution(&(&q * &y), &y).unwrap();
        assert!((sol.rotation - q).norm() < 1e-10);
        let same = procrustes_svd_solution(&y, &y).unwrap();
        assert!((same.rotation - DMatrix::identity(3, 3)).norm() < 1e-12);
        assert!(!same.degenerate);
    }

    #[test]
    fn kernel_values() {
        let x = vec![DMatrix::identity(2, 2)];
        let u = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let w = vec![DMatrix::identity(2, 2)];
        // R = diag(2, 1): ‖RᵀR − I‖² = 9
        assert_eq!(procrustes_shrinkage_kernel(&w, &u, &[1.0], &x, 2.0).unwrap(), -18.0);
        assert_eq!(procrustes_shrinkage_kernel(&w, &u, &[1.0], &x, 0.0).unwrap(), 0.0);
        let eye = DMatrix::identity(2, 2);
        assert_eq!(procrustes_shrinkage_kernel(&w, &eye, &[1.0], &x, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn residual_norm_matches_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let batches = vec![randn(&mut rng, 2, 6), randn(&mut rng, 2, 6)];
        let m = ProcrustesModel::new(batches.clone()).unwrap();
        let theta = m.initial_point();
        let (b, z) = m.split(&theta);
        let parts = m.parts(b, z);
        let k = procrustes_shrinkage_kernel(&parts.w, &parts.u, &parts.s, &batches, 1.0).unwrap();
        assert!((m.grad_h(b, z).norm_squared() + k).abs() < 1e-12);
    }

    #[test]
    fn model_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let batches = vec![randn(&mut rng, 2, 4), randn(&mut rng, 2, 4)];
        let m = ProcrustesModel::new(batches).unwrap();
        let mut theta = m.initial_point();
        for (i, v) in theta.iter_mut().enumerate() {
            *v += 0.05 * ((i * 7 % 5) as f64 - 2.0);
        }
        let cfg = KernelConfig::with_lambda(3.0);
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
    fn jacobian_blocks_agree_with_vjp() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = ProcrustesModel::new(vec![randn(&mut rng, 2, 3)]).unwrap();
        let theta = m.initial_point();
        let (b, z) = m.split(&theta);
        let v = DVector::from_vec(vec![0.3, -1.0, 0.7]);
        let (kb, kz) = m.kernel_vjp(b, z, &v);
        assert!((m.hess_zbeta(b, z).tr_mul(&v) - kb).norm() < 1e-12);
        assert!((m.hess_zz(b, z).tr_mul(&v) - kz).norm() < 1e-12);
    }

    #[test]
    fn weak_duality_on_random_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..5 {
            let (beta, y) = (randn(&mut rng, 3, 5), randn(&mut rng, 3, 5));
            let w = initial_factor(&randn(&mut rng, 3, 5)).unwrap();
            let dual = procrustes_dual_value(&w, &beta, &y).unwrap();
            for _ in 0..50 {
                let q = procrustes_svd_solution(&randn(&mut rng, 3, 3), &DMatrix::identity(3, 3))
                    .unwrap()
                    .rotation;
                assert!(dual <= (&q * &y - &beta).norm_squared() + 1e-9);
            }
        }
    }
}
