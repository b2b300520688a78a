//! Hamiltonian Monte Carlo with the No-U-Turn sampler.
//!
//! Randomness comes from ChaCha8 seeded with the 64-bit config seed; chain
//! `k` uses stream `k` of that generator, so chains are independent and each
//! is reproducible on its own.

mod adapt;
mod leapfrog;
mod mass;
mod mode;
mod nuts;

pub use adapt::{DualAveraging, WindowedDiagonal};
pub use leapfrog::{leapfrog, leapfrog_step, PhasePoint};
pub use mass::{build_mass_inverse, MassMode, MassSpec, DEFAULT_TAU_RIDGE};
pub use mode::{find_posterior_mode, ModeOptions, ModeResult};
pub use nuts::{TransitionInfo, MAX_DELTA_H};

use crate::error::{DomainError, Error, Result};
use crate::layout::{Layout, Transform};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// An unnormalized log density with its gradient.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Writes `∇ log p(θ)` into `grad` and returns `log p(θ)`. Points outside
    /// the support return the violation.
    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> std::result::Result<f64, DomainError>;

    fn layout(&self) -> Layout {
        Layout::new().push("theta", self.dim(), Transform::Identity)
    }

    /// Starting point used when the config asks for automatic initialization.
    fn initial_point(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }
}

/// Adapts a closure to [`LogDensity`].
pub struct FnDensity<F> {
    dim: usize,
    f: F,
}

impl<F> FnDensity<F>
where
    F: Fn(&[f64], &mut [f64]) -> std::result::Result<f64, DomainError> + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> LogDensity for FnDensity<F>
where
    F: Fn(&[f64], &mut [f64]) -> std::result::Result<f64, DomainError> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> std::result::Result<f64, DomainError> {
        (self.f)(theta, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_iterations: usize,
    pub n_burnin: usize,
    pub thin: usize,
    pub target_accept: f64,
    pub max_tree_depth: u32,
    pub seed: u64,
    /// Starting point in sampling coordinates; `None` means automatic.
    pub init: Option<Vec<f64>>,
    /// Estimate a diagonal inverse mass during burn-in.
    pub adapt_diag_mass: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_iterations: 12_000,
            n_burnin: 2_000,
            thin: 10,
            target_accept: 0.8,
            max_tree_depth: 10,
            seed: 0,
            init: None,
            adapt_diag_mass: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_burnin >= self.n_iterations {
            return Err(Error::InvalidArgument(format!(
                "n_burnin ({}) must be below n_iterations ({})",
                self.n_burnin, self.n_iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidArgument("thin must be >= 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "target_accept must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        if self.max_tree_depth == 0 {
            return Err(Error::InvalidArgument("max_tree_depth must be >= 1".into()));
        }
        Ok(())
    }

    pub fn kept_draws(&self) -> usize {
        (self.n_iterations - self.n_burnin) / self.thin
    }
}

/// Kept draws of one chain with per-iteration metadata.
#[derive(Debug, Clone)]
pub struct Chain {
    /// One row per kept iteration, in sampling coordinates.
    pub samples: DMatrix<f64>,
    pub log_densities: Vec<f64>,
    pub tree_depths: Vec<u32>,
    pub accept_stats: Vec<f64>,
    pub divergences: Vec<bool>,
    pub n_leapfrog: Vec<u32>,
    pub layout: Layout,
    pub chain_id: usize,
    pub seed: u64,
    pub step_size: f64,
    pub mass_mode: MassMode,
    /// Inverse-mass diagonal after adaptation, when it was adapted.
    pub adapted_inv_diag: Option<Vec<f64>>,
    /// Gradient evaluations over the whole run, burn-in included.
    pub grad_evals: u64,
    pub burnin_divergences: usize,
    pub warnings: Vec<String>,
}

impl Chain {
    pub fn n_kept(&self) -> usize {
        self.samples.nrows()
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.samples.column(j).iter().copied().collect()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.samples.row(i).iter().copied().collect()
    }

    pub fn divergence_count(&self) -> usize {
        self.divergences.iter().filter(|d| **d).count()
    }

    /// Natural-scale draws (block transforms applied).
    pub fn natural_samples(&self) -> DMatrix<f64> {
        let mut out = self.samples.clone();
        for i in 0..out.nrows() {
            let row = self.layout.to_natural(&self.row(i));
            out.row_mut(i).copy_from_slice(&row);
        }
        out
    }
}

/// `min(1, exp(H_current − H_proposed))`.
pub fn acceptance_ratio(h_current: f64, h_proposed: f64) -> Result<f64> {
    if !h_current.is_finite() {
        return Err(Error::InvalidState(format!("current Hamiltonian is {h_current}")));
    }
    if h_proposed == f64::INFINITY || h_proposed.is_nan() {
        return Ok(0.0);
    }
    Ok((h_current - h_proposed).exp().min(1.0))
}

/// Doubles or halves `eps` until a single leapfrog step crosses acceptance 1/2.
pub fn initial_step_size<D: LogDensity + ?Sized, R: rand::Rng>(
    target: &D,
    mass: &MassSpec,
    start: &PhasePoint,
    eps0: f64,
    rng: &mut R,
) -> f64 {
    let log_half = 0.5f64.ln();
    let mut scratch = vec![0.0; start.theta.len()];
    let mut trial = |eps: f64, rng: &mut R| -> f64 {
        let mut z = start.clone();
        mass.draw_momentum(rng, &mut z.p);
        let h0 = z.hamiltonian(mass);
        match leapfrog(target, mass, &mut z, eps, &mut scratch) {
            Ok(()) => {
                let h = z.hamiltonian(mass);
                if h.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    h0 - h
                }
            }
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let mut eps = eps0;
    let up = trial(eps, rng) > log_half;
    for _ in 0..100 {
        let d = trial(eps, rng);
        if up && !(d > log_half) {
            break;
        }
        if !up && !(d < log_half) {
            break;
        }
        let next = if up { 2.0 * eps } else { 0.5 * eps };
        if !(next > 1e-12 && next < 1e7) {
            break;
        }
        eps = next;
    }
    eps
}

fn chain_rng(seed: u64, chain_id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain_id as u64);
    rng
}

/// Runs one chain with id 0.
pub fn nuts_sample<D: LogDensity + ?Sized>(target: &D, cfg: &SamplerConfig, mass: &MassSpec) -> Result<Chain> {
    nuts_chain(target, cfg, mass, 0)
}

/// Runs `n_chains` chains concurrently; chain `k` uses RNG stream `k`.
pub fn sample_chains<D: LogDensity + ?Sized>(
    target: &D,
    cfg: &SamplerConfig,
    mass: &MassSpec,
    n_chains: usize,
) -> Result<Vec<Chain>> {
    (0..n_chains)
        .into_par_iter()
        .map(|k| nuts_chain(target, cfg, mass, k))
        .collect()
}

/// Runs chain `chain_id`: burn-in with step-size (and optionally diagonal
/// mass) adaptation, then sampling with everything frozen.
pub fn nuts_chain<D: LogDensity + ?Sized>(
    target: &D,
    cfg: &SamplerConfig,
    mass: &MassSpec,
    chain_id: usize,
) -> Result<Chain> {
    cfg.validate()?;
    let dim = target.dim();
    if mass.dim() != dim {
        return Err(Error::InvalidArgument(format!(
            "mass matrix dimension {} does not match target dimension {dim}",
            mass.dim()
        )));
    }
    let init = cfg.init.clone().unwrap_or_else(|| target.initial_point());
    if init.len() != dim {
        return Err(Error::InvalidArgument(format!(
            "init has length {} but the target has dimension {dim}",
            init.len()
        )));
    }
    let mut current = PhasePoint::at(target, init)
        .map_err(|e| Error::Initialization(format!("log density not finite at the initial point: {e}")))?;
    if !current.logp.is_finite() {
        return Err(Error::Initialization(format!(
            "log density is {} at the initial point",
            current.logp
        )));
    }

    let mut rng = chain_rng(cfg.seed, chain_id);
    let mut mass = mass.clone();
    let mut grad_evals: u64 = 0;
    let mut eps = initial_step_size(target, &mass, &current, 1.0, &mut rng);
    let mut da = DualAveraging::new(cfg.target_accept, eps);
    let mut windows = cfg.adapt_diag_mass.then(|| WindowedDiagonal::new(dim, cfg.n_burnin));
    let mut adapted_inv_diag = None;
    let mut burnin_divergences = 0;

    let n_keep = cfg.kept_draws();
    let mut samples = DMatrix::zeros(n_keep, dim);
    let mut log_densities = Vec::with_capacity(n_keep);
    let mut tree_depths = Vec::with_capacity(n_keep);
    let mut accept_stats = Vec::with_capacity(n_keep);
    let mut divergences = Vec::with_capacity(n_keep);
    let mut n_leapfrog = Vec::with_capacity(n_keep);

    for it in 0..cfg.n_iterations {
        let (next, info) = {
            let mut nuts = nuts::Nuts::new(target, &mass, eps, cfg.max_tree_depth, &mut rng);
            nuts.transition(&current)
        };
        current = next;
        grad_evals += info.n_leapfrog as u64;

        if it < cfg.n_burnin {
            if info.divergent {
                burnin_divergences += 1;
            }
            eps = da.update(info.accept_stat);
            if let Some(w) = windows.as_mut() {
                if let Some(var) = w.observe(&current.theta) {
                    mass = MassSpec::diagonal(var.clone())?;
                    adapted_inv_diag = Some(var);
                    eps = initial_step_size(target, &mass, &current, eps, &mut rng);
                    da.restart(eps);
                }
            }
            if it + 1 == cfg.n_burnin {
                eps = da.final_step_size();
            }
            continue;
        }
        let k = it - cfg.n_burnin;
        if !(k + 1).is_multiple_of(cfg.thin) {
            continue;
        }
        let row = k / cfg.thin;
        if row >= n_keep {
            break;
        }
        samples.row_mut(row).copy_from_slice(&current.theta);
        log_densities.push(current.logp);
        tree_depths.push(info.depth);
        accept_stats.push(info.accept_stat);
        divergences.push(info.divergent);
        n_leapfrog.push(info.n_leapfrog);
    }

    let mut warnings: Vec<String> = mass.warnings().to_vec();
    let n_div = divergences.iter().filter(|d| **d).count();
    if n_keep > 0 && 2 * n_div > n_keep {
        warnings.push(format!("{n_div} of {n_keep} kept iterations were divergent"));
    }
    Ok(Chain {
        samples,
        log_densities,
        tree_depths,
        accept_stats,
        divergences,
        n_leapfrog,
        layout: target.layout(),
        chain_id,
        seed: cfg.seed,
        step_size: eps,
        mass_mode: mass.mode(),
        adapted_inv_diag,
        grad_evals,
        burnin_divergences,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_normal(dim: usize) -> FnDensity<impl Fn(&[f64], &mut [f64]) -> std::result::Result<f64, DomainError> + Sync> {
        FnDensity::new(dim, |x: &[f64], g: &mut [f64]| {
            let mut f = 0.0;
            for i in 0..x.len() {
                g[i] = -x[i];
                f -= 0.5 * x[i] * x[i];
            }
            Ok(f)
        })
    }

    #[test]
    fn acceptance_ratio_values() {
        assert_eq!(acceptance_ratio(1.0, 1.0).unwrap(), 1.0);
        assert!((acceptance_ratio(1.0, 1.0 + 2f64.ln()).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(acceptance_ratio(1.0, f64::INFINITY).unwrap(), 0.0);
        assert_eq!(acceptance_ratio(3.0, 0.0).unwrap(), 1.0);
        assert!(acceptance_ratio(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SamplerConfig::default().validate().is_ok());
        let bad = SamplerConfig {
            n_burnin: 12_000,
            ..SamplerConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SamplerConfig {
            thin: 0,
            ..SamplerConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(SamplerConfig::default().kept_draws(), 1000);
    }

    #[test]
    fn gaussian_moments() {
        let target = std_normal(2);
        let cfg = SamplerConfig {
            n_iterations: 11_000,
            n_burnin: 1_000,
            thin: 1,
            seed: 11,
            ..SamplerConfig::default()
        };
        let chain = nuts_sample(&target, &cfg, &MassSpec::identity(2)).unwrap();
        assert_eq!(chain.n_kept(), 10_000);
        for j in 0..2 {
            let x = chain.column(j);
            let n = x.len() as f64;
            let m = x.iter().sum::<f64>() / n;
            let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
            let ess = crate::diagnostics::effective_sample_size(&x).ess;
            assert!(m.abs() < 3.0 * (v / ess).sqrt(), "mean {m}");
            assert!((v - 1.0).abs() < 0.05, "var {v}");
        }
        let x0 = chain.column(0);
        let x1 = chain.column(1);
        let c = x0.iter().zip(&x1).map(|(a, b)| a * b).sum::<f64>() / x0.len() as f64;
        assert!(c.abs() < 0.05);
    }

    #[test]
    fn chains_are_deterministic() {
        let target = std_normal(3);
        let cfg = SamplerConfig {
            n_iterations: 600,
            n_burnin: 300,
            thin: 3,
            seed: 5,
            ..SamplerConfig::default()
        };
        let a = sample_chains(&target, &cfg, &MassSpec::identity(3), 2).unwrap();
        let b = sample_chains(&target, &cfg, &MassSpec::identity(3), 2).unwrap();
        assert_eq!(a[0].samples, b[0].samples);
        assert_eq!(a[1].samples, b[1].samples);
        assert_ne!(a[0].samples, a[1].samples);
        assert_eq!(a[0].n_kept(), 100);
    }

    #[test]
    fn diagonal_adaptation_learns_scales() {
        let scales = [0.1, 1.0, 10.0];
        let target = FnDensity::new(3, move |x: &[f64], g: &mut [f64]| {
            let mut f = 0.0;
            for i in 0..3 {
                g[i] = -x[i] / (scales[i] * scales[i]);
                f -= 0.5 * (x[i] / scales[i]).powi(2);
            }
            Ok(f)
        });
        let cfg = SamplerConfig {
            n_iterations: 2_000,
            n_burnin: 1_000,
            thin: 1,
            seed: 3,
            adapt_diag_mass: true,
            ..SamplerConfig::default()
        };
        let chain = nuts_sample(&target, &cfg, &MassSpec::identity(3)).unwrap();
        assert_eq!(chain.mass_mode, MassMode::Diagonal);
        let d = chain.adapted_inv_diag.unwrap();
        for i in 0..3 {
            let r = d[i] / (scales[i] * scales[i]);
            assert!(r > 0.5 && r < 2.0, "{d:?}");
        }
    }

    #[test]
    fn infeasible_init_is_an_error() {
        let target = FnDensity::new(1, |x: &[f64], g: &mut [f64]| {
            if x[0] <= 0.0 {
                return Err(DomainError::new("x", "must be positive"));
            }
            g[0] = -1.0;
            Ok(-x[0])
        });
        let cfg = SamplerConfig {
            init: Some(vec![-1.0]),
            n_iterations: 10,
            n_burnin: 5,
            thin: 1,
            ..SamplerConfig::default()
        };
        assert!(matches!(nuts_sample(&target, &cfg, &MassSpec::identity(1)), Err(Error::Initialization(_))));
    }

    #[test]
    fn hard_wall_is_respected() {
        // exponential(1) on x > 0: every draw must stay inside the support
        let target = FnDensity::new(1, |x: &[f64], g: &mut [f64]| {
            if x[0] <= 0.0 {
                return Err(DomainError::new("x", "must be positive"));
            }
            g[0] = -1.0;
            Ok(-x[0])
        });
        let cfg = SamplerConfig {
            init: Some(vec![1.0]),
            n_iterations: 6_000,
            n_burnin: 1_000,
            thin: 1,
            seed: 2,
            ..SamplerConfig::default()
        };
        let chain = nuts_sample(&target, &cfg, &MassSpec::identity(1)).unwrap();
        let x = chain.column(0);
        assert!(x.iter().all(|v| *v > 0.0));
        let m = x.iter().sum::<f64>() / x.len() as f64;
        assert!((m - 1.0).abs() < 0.1, "mean {m}");
    }
}
