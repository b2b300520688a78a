//! Seeded synthetic datasets for every model.

use super::config::{ModelKind, SimulationConfig};
use crate::error::{Error, Result};
use crate::lp::max_flow;
use crate::models::{FlowData, FlowNetworkSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

/// The bundled 7-node, 10-edge network. Its `designed_capacity` field holds
/// the ground-truth capacities `β⁰`.
pub const BUNDLED_NETWORK: &str = include_str!("../../data/flow_network.json");

pub fn bundled_network() -> FlowNetworkSpec {
    let spec: FlowNetworkSpec = serde_json::from_str(BUNDLED_NETWORK).expect("bundled network parses");
    spec.validate().expect("bundled network is valid");
    spec
}

/// Capacities drawn uniformly on `[lo, hi]`.
pub fn uniform_capacities(n_edges: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_edges).map(|_| rng.random_range(lo..=hi)).collect()
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Replicate flow measurements around the maximum flow, and noisy designed
/// capacities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowDataset {
    /// The network with `designed_capacity` replaced by the simulated `c`.
    pub spec: FlowNetworkSpec,
    pub beta0: Vec<f64>,
    pub z0: Vec<f64>,
    pub max_flow_value: f64,
    /// One row per replicate.
    pub y: Vec<Vec<f64>>,
}

impl FlowDataset {
    pub fn observations(&self) -> DMatrix<f64> {
        let e = self.beta0.len();
        DMatrix::from_fn(self.y.len(), e, |s, k| self.y[s][k])
    }

    pub fn data(&self) -> FlowData {
        FlowData::from_observations(&self.observations())
    }
}

/// Draws `yˢ = z⁰ + noise_sd·ε` for `s = 1..n_obs`, with `z⁰` the maximum flow
/// under `β⁰`, and `c = β⁰ + c_noise_sd·ε` truncated to stay positive.
pub fn simulate_flow_data(
    spec: &FlowNetworkSpec,
    beta0: &[f64],
    n_obs: usize,
    noise_sd: f64,
    c_noise_sd: f64,
    seed: u64,
) -> Result<FlowDataset> {
    spec.validate()?;
    if beta0.len() != spec.n_edges() || beta0.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
        return Err(Error::InvalidArgument("beta0 must be positive, one value per edge".into()));
    }
    if n_obs == 0 || !(noise_sd >= 0.0) || !(c_noise_sd >= 0.0) {
        return Err(Error::InvalidArgument("need n_obs >= 1 and non-negative noise".into()));
    }
    let sol = max_flow(spec, beta0);
    let mut rng = rng_for(seed);
    let y = (0..n_obs)
        .map(|_| sol.flow.iter().map(|z| z + noise_sd * normal(&mut rng)).collect())
        .collect();
    let c = beta0
        .iter()
        .map(|b| loop {
            let v = b + c_noise_sd * normal(&mut rng);
            if v > 0.0 {
                break v;
            }
        })
        .collect();
    let mut observed = spec.clone();
    observed.designed_capacity = c;
    Ok(FlowDataset {
        spec: observed,
        beta0: beta0.to_vec(),
        z0: sol.flow,
        max_flow_value: sol.value,
        y,
    })
}

/// `y_i ~ N(z_i, τ)` with `z_i ~ N(0, β⁰)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalMeansDataset {
    pub tau: f64,
    pub beta0: f64,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn simulate_normal_means(n: usize, tau: f64, beta0: f64, seed: u64) -> Result<NormalMeansDataset> {
    if n == 0 || !(tau > 0.0 && beta0 > 0.0) {
        return Err(Error::InvalidArgument("need n >= 1 and tau, beta0 > 0".into()));
    }
    let mut rng = rng_for(seed);
    let z: Vec<f64> = (0..n).map(|_| beta0.sqrt() * normal(&mut rng)).collect();
    let y = z.iter().map(|z| z + tau.sqrt() * normal(&mut rng)).collect();
    Ok(NormalMeansDataset { tau, beta0, z, y })
}

/// Batches `X_b = Q_bᵀ(s_b u⁰ + noise)` sharing one clustered representation
/// `u⁰`, with random orthogonal `Q_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcrustesDataset {
    /// Each batch as `d` rows of `n` values.
    pub batches: Vec<Vec<Vec<f64>>>,
    pub cell_types: Vec<usize>,
    pub scales: Vec<f64>,
}

impl ProcrustesDataset {
    pub fn matrices(&self) -> Vec<DMatrix<f64>> {
        self.batches
            .iter()
            .map(|rows| DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]))
            .collect()
    }

    pub fn n_cells(&self) -> usize {
        self.cell_types.len()
    }
}

pub fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| normal(rng));
    let qr = a.qr();
    let (q, r) = (qr.q(), qr.r());
    // fix column signs so the draw is Haar distributed
    let signs = DVector::from_iterator(d, (0..d).map(|i| r[(i, i)].signum()));
    q * DMatrix::from_diagonal(&signs)
}

pub fn simulate_procrustes_data(
    d: usize,
    n_cells: usize,
    n_batches: usize,
    n_types: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<ProcrustesDataset> {
    if d == 0 || n_batches == 0 || n_types == 0 || n_cells < n_types || !(noise_sd >= 0.0) {
        return Err(Error::InvalidArgument("invalid Procrustes simulation sizes".into()));
    }
    let mut rng = rng_for(seed);
    let centers = DMatrix::from_fn(d, n_types, |_, _| 2.0 * normal(&mut rng));
    let cell_types: Vec<usize> = (0..n_cells).map(|i| i % n_types).collect();
    let u0 = DMatrix::from_fn(d, n_cells, |i, j| centers[(i, cell_types[j])] + 0.3 * normal(&mut rng));
    let mut batches = Vec::with_capacity(n_batches);
    let mut scales = Vec::with_capacity(n_batches);
    for _ in 0..n_batches {
        let s = rng.random_range(0.7..1.3);
        let q = random_orthogonal(d, &mut rng);
        let noisy = &u0 * s + DMatrix::from_fn(d, n_cells, |_, _| noise_sd * normal(&mut rng));
        let x = q.transpose() * noisy;
        batches.push((0..d).map(|i| x.row(i).iter().copied().collect()).collect());
        scales.push(s);
    }
    Ok(ProcrustesDataset {
        batches,
        cell_types,
        scales,
    })
}

/// Binary responses from a logistic curve given by a natural cubic spline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentQuadraticDataset {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z_true: Vec<f64>,
}

impl LatentQuadraticDataset {
    pub fn locations(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.x.len(), 1, &self.x)
    }
}

/// Natural cubic spline through `(knots[i], values[i])`, evaluated at `at`.
pub fn natural_cubic_spline(knots: &[f64], values: &[f64], at: &[f64]) -> Vec<f64> {
    let n = knots.len();
    assert!(n >= 2 && values.len() == n, "need at least two knots");
    let h: Vec<f64> = (0..n - 1).map(|i| knots[i + 1] - knots[i]).collect();
    // second derivatives m with m_0 = m_{n−1} = 0 from the tridiagonal system
    let mut m = vec![0.0; n];
    if n > 2 {
        let k = n - 2;
        let mut diag = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for i in 0..k {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            rhs[i] = 6.0 * ((values[i + 2] - values[i + 1]) / h[i + 1] - (values[i + 1] - values[i]) / h[i]);
        }
        for i in 1..k {
            let w = h[i] / diag[i - 1];
            diag[i] -= w * h[i];
            rhs[i] -= w * rhs[i - 1];
        }
        m[k] = rhs[k - 1] / diag[k - 1];
        for i in (0..k - 1).rev() {
            m[i + 1] = (rhs[i] - h[i + 1] * m[i + 2]) / diag[i];
        }
    }
    at.iter()
        .map(|&t| {
            let i = match knots.iter().position(|k| *k > t) {
                Some(0) => 0,
                Some(p) => p - 1,
                None => n - 2,
            };
            let (a, b) = (knots[i + 1] - t, t - knots[i]);
            m[i] * a.powi(3) / (6.0 * h[i])
                + m[i + 1] * b.powi(3) / (6.0 * h[i])
                + (values[i] / h[i] - m[i] * h[i] / 6.0) * a
                + (values[i + 1] / h[i] - m[i + 1] * h[i] / 6.0) * b
        })
        .collect()
}

/// `n` locations uniform on `[−6, 6]`; the latent curve is a spline through
/// `n_control` evenly spaced knots with values uniform on `[−3, 3]`.
pub fn simulate_latent_quadratic_data(n: usize, n_control: usize, seed: u64) -> Result<LatentQuadraticDataset> {
    if n == 0 || n_control < 2 {
        return Err(Error::InvalidArgument("need n >= 1 and at least two control points".into()));
    }
    let mut rng = rng_for(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-6.0..6.0)).collect();
    let knots: Vec<f64> = (0..n_control)
        .map(|i| -6.0 + 12.0 * i as f64 / (n_control - 1) as f64)
        .collect();
    let values: Vec<f64> = (0..n_control).map(|_| rng.random_range(-3.0..3.0)).collect();
    let z_true = natural_cubic_spline(&knots, &values, &x);
    let y = z_true
        .iter()
        .map(|z| {
            let p = 1.0 / (1.0 + (-z).exp());
            if rng.random::<f64>() < p {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(LatentQuadraticDataset { x, y, z_true })
}

/// Normal draws with the given mean and sd.
pub fn normal_draws(n: usize, mean: f64, sd: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed);
    let dist = Normal::new(mean, sd).expect("sd must be finite and non-negative");
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

/// Any model's dataset, tagged by model name in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Dataset {
    NormalMeans(NormalMeansDataset),
    Flow(FlowDataset),
    Procrustes(ProcrustesDataset),
    LatentQuadratic(LatentQuadraticDataset),
}

impl Dataset {
    pub fn model(&self) -> ModelKind {
        match self {
            Dataset::NormalMeans(_) => ModelKind::NormalMeans,
            Dataset::Flow(_) => ModelKind::Flow,
            Dataset::Procrustes(_) => ModelKind::Procrustes,
            Dataset::LatentQuadratic(_) => ModelKind::LatentQuadratic,
        }
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Simulates a dataset for `model` from a simulation block; unset fields take
/// the model defaults.
pub fn simulate_dataset(model: ModelKind, sim: &SimulationConfig) -> Result<Dataset> {
    let s = sim.resolved(model);
    let seed = s.seed.unwrap();
    let n = s.n_obs.unwrap();
    Ok(match model {
        ModelKind::Flow => {
            let spec = match &s.network {
                Some(p) => FlowNetworkSpec::from_json_file(p)?,
                None => bundled_network(),
            };
            let beta0 = s.beta0.clone().unwrap_or_else(|| spec.designed_capacity.clone());
            Dataset::Flow(simulate_flow_data(
                &spec,
                &beta0,
                n,
                s.noise_sd.unwrap(),
                s.c_noise_sd.unwrap(),
                seed,
            )?)
        }
        ModelKind::NormalMeans => {
            let beta0 = s.beta0.as_deref().unwrap_or(&[1.0]);
            if beta0.len() != 1 {
                return Err(Error::Config("normal means takes a single beta0 value".into()));
            }
            Dataset::NormalMeans(simulate_normal_means(n, s.tau.unwrap(), beta0[0], seed)?)
        }
        ModelKind::Procrustes => Dataset::Procrustes(simulate_procrustes_data(
            s.dim.unwrap(),
            n,
            s.n_batches.unwrap(),
            s.n_types.unwrap(),
            s.noise_sd.unwrap(),
            seed,
        )?),
        ModelKind::LatentQuadratic => {
            Dataset::LatentQuadratic(simulate_latent_quadratic_data(n, s.n_control.unwrap(), seed)?)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_reproduces_max_flow() {
        let spec = bundled_network();
        let beta0 = spec.designed_capacity.clone();
        let ds = simulate_flow_data(&spec, &beta0, 5, 0.0, 0.5, 1).unwrap();
        for row in &ds.y {
            assert_eq!(row, &ds.z0);
        }
    }

    #[test]
    fn flow_simulation_is_deterministic() {
        let spec = bundled_network();
        let beta0 = spec.designed_capacity.clone();
        let a = simulate_flow_data(&spec, &beta0, 50, 0.5, 0.5, 9).unwrap();
        let b = simulate_flow_data(&spec, &beta0, 50, 0.5, 0.5, 9).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn replicate_means_converge() {
        let spec = bundled_network();
        let beta0 = spec.designed_capacity.clone();
        let ds = simulate_flow_data(&spec, &beta0, 1000, 0.5, 0.5, 2).unwrap();
        let data = ds.data();
        let se = 0.5 / 1000f64.sqrt();
        for (m, z) in data.y_mean.iter().zip(&ds.z0) {
            assert!((m - z).abs() < 3.0 * se + 1e-12, "{m} vs {z}");
        }
    }

    #[test]
    fn spline_interpolates_and_is_linear_for_linear_data() {
        let knots = [0.0, 1.0, 2.5, 4.0];
        let vals = [1.0, 3.0, 6.0, 9.0];
        let at = natural_cubic_spline(&knots, &vals, &knots);
        for (a, v) in at.iter().zip(vals) {
            assert!((a - v).abs() < 1e-12);
        }
        let lin = natural_cubic_spline(&[0.0, 1.0, 2.0], &[0.0, 2.0, 4.0], &[0.5, 1.7]);
        assert!((lin[0] - 1.0).abs() < 1e-12 && (lin[1] - 3.4).abs() < 1e-12);
    }

    #[test]
    fn dataset_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        for model in [ModelKind::Flow, ModelKind::NormalMeans, ModelKind::Procrustes, ModelKind::LatentQuadratic] {
            let d = simulate_dataset(model, &SimulationConfig::default()).unwrap();
            assert_eq!(d.model(), model);
            d.save(&path).unwrap();
            assert_eq!(Dataset::load(&path).unwrap(), d);
        }
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = rng_for(4);
        let q = random_orthogonal(4, &mut rng);
        assert!((q.transpose() * &q - DMatrix::identity(4, 4)).norm() < 1e-12);
    }
}
