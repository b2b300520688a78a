//! TOML experiment configuration.

use crate::bridge::KernelConfig;
use crate::error::{Error, Result};
use crate::models::FlowModelParams;
use crate::sampler::{SamplerConfig, DEFAULT_TAU_RIDGE};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    NormalMeans,
    Flow,
    Procrustes,
    LatentQuadratic,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::NormalMeans => "normal_means",
            ModelKind::Flow => "flow",
            ModelKind::Procrustes => "procrustes",
            ModelKind::LatentQuadratic => "latent_quadratic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorKind {
    #[default]
    GradientBridged,
    GibbsPlain,
    GibbsJoint,
}

impl PosteriorKind {
    pub fn name(self) -> &'static str {
        match self {
            PosteriorKind::GradientBridged => "gradient_bridged",
            PosteriorKind::GibbsPlain => "gibbs_plain",
            PosteriorKind::GibbsJoint => "gibbs_joint",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassChoice {
    /// `(1 + τ)I − QQᵀ` from the kernel Jacobian at the posterior mode.
    #[default]
    Projection,
    Identity,
    /// Identity start with windowed diagonal adaptation during burn-in.
    DefaultDiag,
}

impl MassChoice {
    pub fn name(self) -> &'static str {
        match self {
            MassChoice::Projection => "projection",
            MassChoice::Identity => "identity",
            MassChoice::DefaultDiag => "default_diag",
        }
    }
}

/// Simulation settings. Unset fields take model-specific defaults, filled in
/// by [`SimulationConfig::resolved`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub seed: Option<u64>,
    /// Flow replicates, normal-means observations, latent-quadratic
    /// locations or Procrustes cells per batch.
    pub n_obs: Option<usize>,
    /// Flow measurement noise or Procrustes coordinate noise.
    pub noise_sd: Option<f64>,
    /// Flow: noise on the designed capacities.
    pub c_noise_sd: Option<f64>,
    /// Flow: network file; the bundled network when unset.
    pub network: Option<PathBuf>,
    /// Flow: true capacities, one per edge. Normal means: the true prior
    /// variance as a single value.
    pub beta0: Option<Vec<f64>>,
    /// Normal means: observation variance.
    pub tau: Option<f64>,
    /// Procrustes: dimension of each cell's coordinates.
    pub dim: Option<usize>,
    pub n_batches: Option<usize>,
    pub n_types: Option<usize>,
    /// Latent quadratic: spline control points.
    pub n_control: Option<usize>,
}

impl SimulationConfig {
    /// A copy with every field relevant to `model` set.
    pub fn resolved(&self, model: ModelKind) -> SimulationConfig {
        let mut s = self.clone();
        s.seed.get_or_insert(1);
        match model {
            ModelKind::Flow => {
                s.n_obs.get_or_insert(1000);
                s.noise_sd.get_or_insert(0.5);
                s.c_noise_sd.get_or_insert(0.5);
            }
            ModelKind::NormalMeans => {
                s.n_obs.get_or_insert(50);
                s.tau.get_or_insert(1.0);
                s.beta0.get_or_insert(vec![1.0]);
            }
            ModelKind::Procrustes => {
                s.n_obs.get_or_insert(45);
                s.noise_sd.get_or_insert(0.1);
                s.dim.get_or_insert(3);
                s.n_batches.get_or_insert(2);
                s.n_types.get_or_insert(3);
            }
            ModelKind::LatentQuadratic => {
                s.n_obs.get_or_insert(100);
                s.n_control.get_or_insert(8);
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// A dataset JSON written by `simulate`.
    pub path: Option<PathBuf>,
    pub simulation: Option<SimulationConfig>,
}

fn default_lambda() -> f64 {
    KernelConfig::DEFAULT_LAMBDA
}

fn default_barrier_t() -> f64 {
    KernelConfig::DEFAULT_BARRIER_T
}

fn default_tau_ridge() -> f64 {
    DEFAULT_TAU_RIDGE
}

fn default_chains() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    #[serde(default)]
    pub posterior: PosteriorKind,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_barrier_t")]
    pub barrier_t: f64,
    #[serde(default)]
    pub mass: MassChoice,
    #[serde(default = "default_tau_ridge")]
    pub tau_ridge: f64,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub data: DataConfig,
    /// Flow model priors and optional fixed variances.
    #[serde(default)]
    pub flow: FlowModelParams,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Defaults for `model` with a default simulation block.
    pub fn new(model: ModelKind) -> Self {
        Self {
            model,
            posterior: PosteriorKind::default(),
            lambda: default_lambda(),
            barrier_t: default_barrier_t(),
            mass: MassChoice::default(),
            tau_ridge: default_tau_ridge(),
            chains: default_chains(),
            sampler: SamplerConfig::default(),
            data: DataConfig {
                path: None,
                simulation: Some(SimulationConfig::default()),
            },
            flow: FlowModelParams::default(),
            output_dir: default_output_dir(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        Ok(cfg)
    }

    /// Parses and validates a config file. A relative `data.path` or
    /// `network` is resolved against the file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.data.path.as_mut() {
            rebase(p);
        }
        if let Some(p) = cfg.data.simulation.as_mut().and_then(|s| s.network.as_mut()) {
            rebase(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn kernel(&self) -> KernelConfig {
        KernelConfig {
            lambda: self.lambda,
            barrier_t: self.barrier_t,
        }
    }

    /// The simulation block with model defaults filled in, if simulating.
    pub fn resolved_simulation(&self) -> Option<SimulationConfig> {
        self.data.simulation.as_ref().map(|s| s.resolved(self.model))
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel().validate()?;
        self.sampler.validate()?;
        self.flow.validate()?;
        if self.chains == 0 {
            return Err(Error::Config("chains must be >= 1".into()));
        }
        if !(self.tau_ridge > 0.0 && self.tau_ridge.is_finite()) {
            return Err(Error::Config(format!("tau_ridge must be > 0, got {}", self.tau_ridge)));
        }
        match (&self.data.path, &self.data.simulation) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either data.path or data.simulation, not both".into()))
            }
            (None, None) => return Err(Error::Config("missing data.path or data.simulation".into())),
            (Some(p), None) if !p.exists() => {
                return Err(Error::Config(format!("data file {} does not exist", p.display())))
            }
            _ => {}
        }
        if let Some(sim) = &self.data.simulation {
            if let Some(p) = &sim.network {
                if self.model != ModelKind::Flow {
                    return Err(Error::Config("simulation.network applies to the flow model only".into()));
                }
                if !p.exists() {
                    return Err(Error::Config(format!("network file {} does not exist", p.display())));
                }
            }
        }
        if self.posterior == PosteriorKind::GibbsJoint && self.model == ModelKind::Procrustes {
            return Err(Error::Config(
                "gibbs_joint needs a scalar loss, which the Procrustes model does not have".into(),
            ));
        }
        Ok(())
    }
}
