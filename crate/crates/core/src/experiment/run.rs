//! `run_experiment`: dataset, mode, mass matrix, chains and artifacts.

use super::config::{ExperimentConfig, MassChoice, ModelKind, PosteriorKind};
use super::output::{
    pooled_summary, validate_csv, validate_json, write_acf_csv, write_chain_csv, write_json, write_summary_csv,
    DrawTable, CHAIN_META_COLUMNS, SUMMARY_HEADER,
};
use super::simulate::{
    simulate_dataset, Dataset, FlowDataset, LatentQuadraticDataset, NormalMeansDataset, ProcrustesDataset,
};
use crate::bridge::{BridgeProblem, BridgedPosterior};
use crate::diagnostics::{davies_bouldin, kmeans, normalized_mutual_information, principal_components, quantile_sorted, SummaryRow};
use crate::error::{Error, Result};
use crate::layout::Block;
use crate::lp::max_flow;
use crate::models::{
    align_to_first, conditional_z_posterior_params, flow_problem, gibbs_baseline, GibbsVariant, LatentQuadraticModel,
    NormalMeansModel, ProcrustesModel,
};
use crate::sampler::{
    build_mass_inverse, find_posterior_mode, sample_chains, Chain, MassMode, MassSpec, ModeOptions, ModeResult,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const ACF_FILE: &str = "acf.csv";
pub const TIMING_FILE: &str = "timing.json";
pub const DATASET_FILE: &str = "dataset.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Lags written to the ACF table.
const ACF_MAX_LAG: usize = 50;
/// Procrustes rotations count as orthogonal within this Frobenius distance.
pub const ORTHOGONALITY_TOL: f64 = 0.1;
/// Draws scanned when choosing the Procrustes point estimate.
const POINT_ESTIMATE_CANDIDATES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub converged: bool,
    /// The finder could not produce a finite point.
    pub failed: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub log_density: f64,
}

impl From<&ModeResult> for ModeSummary {
    fn from(m: &ModeResult) -> Self {
        Self {
            converged: m.converged,
            failed: !(m.log_density.is_finite() && m.grad_norm.is_finite()),
            iterations: m.iterations,
            grad_norm: m.grad_norm,
            log_density: m.log_density,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassSummary {
    pub requested: MassChoice,
    pub used: MassMode,
    pub adapted: bool,
    /// Why the requested mass matrix was replaced by the identity.
    pub fallback: Option<String>,
    pub rank: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
    pub ess: f64,
}

impl From<&SummaryRow> for ParameterSummary {
    fn from(r: &SummaryRow) -> Self {
        Self {
            name: r.name.clone(),
            mean: r.mean,
            sd: r.sd,
            q025: r.q025,
            q975: r.q975,
            ess: r.ess,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub chain_id: usize,
    pub step_size: f64,
    pub grad_evals: u64,
    pub divergences: usize,
    pub burnin_divergences: usize,
    pub warnings: Vec<String>,
}

/// Everything a run reports, except wall time (kept in `timing.json` so that
/// the manifest is reproducible byte for byte).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub model: ModelKind,
    pub posterior: PosteriorKind,
    /// The config with the simulation block resolved.
    pub config: ExperimentConfig,
    pub scale_note: Option<String>,
    pub seed: u64,
    pub chains: usize,
    pub kept_per_chain: usize,
    pub layout: Vec<Block>,
    pub mode: ModeSummary,
    pub mass: MassSummary,
    pub chain_runs: Vec<ChainSummary>,
    pub grad_evals: u64,
    pub divergences: usize,
    /// Sampled parameters on the natural scale.
    pub parameters: Vec<ParameterSummary>,
    /// Derived quantities.
    pub derived: Vec<ParameterSummary>,
    pub median_ess: f64,
    pub ess_per_grad: f64,
    pub metrics: Value,
    pub files: Vec<String>,
    pub timing_file: String,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn parameter(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters
            .iter()
            .chain(&self.derived)
            .find(|p| p.name == name)
    }

    /// A short label such as `gradient_bridged/projection/lambda=100`.
    pub fn label(&self) -> String {
        format!(
            "{}/{}/lambda={}",
            self.posterior.name(),
            self.config.mass.name(),
            self.config.lambda
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub mode_seconds: f64,
    pub sampling_seconds: f64,
}

/// A finished run: its manifest, the per-chain draw tables (natural-scale
/// parameters then derived quantities) and the raw chains.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub tables: Vec<DrawTable>,
    pub chains: Vec<Chain>,
    pub dataset: Dataset,
    pub output_dir: PathBuf,
}

impl RunOutcome {
    pub fn pooled(&self) -> DrawTable {
        DrawTable::stack(&self.tables)
    }
}

/// Loads `data.path` or simulates from `data.simulation`.
pub fn load_or_simulate(cfg: &ExperimentConfig) -> Result<Dataset> {
    let ds = match (&cfg.data.path, &cfg.data.simulation) {
        (Some(p), _) => Dataset::load(p)?,
        (None, Some(sim)) => simulate_dataset(cfg.model, sim)?,
        (None, None) => return Err(Error::Config("missing data.path or data.simulation".into())),
    };
    if ds.model() != cfg.model {
        return Err(Error::Config(format!(
            "dataset is for model `{}`, config asks for `{}`",
            ds.model().name(),
            cfg.model.name()
        )));
    }
    Ok(ds)
}

/// Runs a configured experiment and writes its artifacts to
/// `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest> {
    run_experiment_detailed(cfg).map(|o| o.manifest)
}

pub fn run_experiment_detailed(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let dataset = load_or_simulate(cfg)?;
    let kernel = cfg.kernel();
    match &dataset {
        Dataset::NormalMeans(d) => {
            let m = NormalMeansModel::new(d.tau, d.y.clone())?;
            execute(cfg, &m, &dataset, |ctx| normal_means_metrics(&m, d, ctx))
        }
        Dataset::Flow(d) => {
            let m = flow_problem(d.spec.clone(), d.data(), cfg.flow.clone(), &kernel)?;
            execute(cfg, &m, &dataset, |ctx| flow_metrics(d, ctx))
        }
        Dataset::Procrustes(d) => {
            let m = ProcrustesModel::new(d.matrices())?;
            execute(cfg, &m, &dataset, |ctx| procrustes_metrics(&m, d, ctx))
        }
        Dataset::LatentQuadratic(d) => {
            let m = LatentQuadraticModel::new(&d.locations(), d.y.clone())?;
            execute(cfg, &m, &dataset, |ctx| latent_quadratic_metrics(&m, d, ctx))
        }
    }
}

/// Inputs to the per-model metric functions.
pub struct MetricContext<'a> {
    pub pooled: &'a DrawTable,
    /// Pooled draws in sampling coordinates.
    pub sampling: &'a DMatrix<f64>,
    pub mode: &'a [f64],
    pub seed: u64,
}

fn target_problem<'a, P: BridgeProblem + Clone + 'a>(
    base: &P,
    posterior: PosteriorKind,
    lambda: f64,
) -> Result<Box<dyn BridgeProblem + 'a>> {
    Ok(match posterior {
        PosteriorKind::GradientBridged => Box::new(base.clone()),
        PosteriorKind::GibbsPlain => Box::new(gibbs_baseline(base.clone(), GibbsVariant::Plain, lambda)?),
        PosteriorKind::GibbsJoint => Box::new(gibbs_baseline(base.clone(), GibbsVariant::JointShrinkage, lambda)?),
    })
}

fn execute<P, F>(cfg: &ExperimentConfig, base: &P, dataset: &Dataset, metrics: F) -> Result<RunOutcome>
where
    P: BridgeProblem + Clone,
    F: FnOnce(&MetricContext) -> Result<Value>,
{
    let wall = Instant::now();
    let kernel = cfg.kernel();
    let problem = target_problem(base, cfg.posterior, cfg.lambda)?;
    let target = BridgedPosterior::new(problem.as_ref(), kernel);
    let dim = problem.dim();
    let opts = ModeOptions::default();

    // Comparators start from the bridged mode so that every method begins on
    // the same side of any hard constraint.
    let mut start = base.initial_point();
    if cfg.posterior != PosteriorKind::GradientBridged {
        let m = find_posterior_mode(&BridgedPosterior::new(base, kernel), &start, opts);
        if m.log_density.is_finite() {
            start = m.point;
        }
    }
    let mode = find_posterior_mode(&target, &start, opts);
    let mode_summary = ModeSummary::from(&mode);
    let mode_seconds = wall.elapsed().as_secs_f64();

    let mut sampler = cfg.sampler.clone();
    if sampler.init.is_none() {
        sampler.init = Some(if mode_summary.failed { start.clone() } else { mode.point.clone() });
    }
    if let Some(init) = &sampler.init {
        if init.len() != dim {
            return Err(Error::Config(format!("sampler.init has length {}, expected {dim}", init.len())));
        }
    }
    let mut fallback = None;
    let mass = match cfg.mass {
        MassChoice::Identity => MassSpec::identity(dim),
        MassChoice::DefaultDiag => {
            sampler.adapt_diag_mass = true;
            MassSpec::identity(dim)
        }
        MassChoice::Projection if mode_summary.failed => {
            fallback = Some("mode finder failed; identity mass used".to_string());
            MassSpec::identity(dim)
        }
        MassChoice::Projection => {
            let (b, z) = problem.split(&mode.point);
            match build_mass_inverse(&problem.g_matrix(b, z), cfg.tau_ridge) {
                Ok(m) => m,
                Err(e) => {
                    fallback = Some(format!("projection mass unavailable ({e}); identity mass used"));
                    MassSpec::identity(dim)
                }
            }
        }
    };

    let sampling_clock = Instant::now();
    let chains = sample_chains(&target, &sampler, &mass, cfg.chains)?;
    let sampling_seconds = sampling_clock.elapsed().as_secs_f64();

    let layout = problem.layout().clone();
    let param_names = layout.column_names();
    let derived_names = problem.derived_names();
    let names: Vec<String> = param_names.iter().chain(&derived_names).cloned().collect();
    let tables: Vec<DrawTable> = chains
        .iter()
        .map(|c| {
            let natural = c.natural_samples();
            let mut values = DMatrix::zeros(c.n_kept(), names.len());
            for i in 0..c.n_kept() {
                let row = c.row(i);
                let (b, z) = problem.split(&row);
                let derived = problem.derived(b, z);
                for (j, v) in natural.row(i).iter().chain(&derived).enumerate() {
                    values[(i, j)] = *v;
                }
            }
            DrawTable {
                names: names.clone(),
                values,
            }
        })
        .collect();
    let pooled = DrawTable::stack(&tables);
    let mut sampling = DMatrix::zeros(pooled.values.nrows(), dim);
    let mut r = 0;
    for c in &chains {
        sampling.rows_mut(r, c.n_kept()).copy_from(&c.samples);
        r += c.n_kept();
    }
    let ctx = MetricContext {
        pooled: &pooled,
        sampling: &sampling,
        mode: &mode.point,
        seed: cfg.sampler.seed,
    };
    let model_metrics = metrics(&ctx)?;

    let summary = pooled_summary(&tables);
    let (params, derived): (Vec<_>, Vec<_>) = summary
        .iter()
        .map(ParameterSummary::from)
        .partition(|p| param_names.contains(&p.name));
    let mut ess: Vec<f64> = params.iter().map(|p| p.ess).collect();
    ess.sort_by(f64::total_cmp);
    let median_ess = if ess.len() % 2 == 1 {
        ess[ess.len() / 2]
    } else {
        0.5 * (ess[ess.len() / 2 - 1] + ess[ess.len() / 2])
    };
    let grad_evals: u64 = chains.iter().map(|c| c.grad_evals).sum();

    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut files = Vec::new();
    for (c, t) in chains.iter().zip(&tables) {
        let name = format!("chain_{}.csv", c.chain_id);
        write_chain_csv(&dir.join(&name), t, c)?;
        files.push(name);
    }
    write_summary_csv(&dir.join(SUMMARY_FILE), &summary)?;
    write_acf_csv(&dir.join(ACF_FILE), &tables[0], ACF_MAX_LAG)?;
    write_json(&dir.join(METRICS_FILE), &model_metrics)?;
    dataset.save(dir.join(DATASET_FILE))?;
    files.extend([SUMMARY_FILE, ACF_FILE, METRICS_FILE, DATASET_FILE].map(String::from));

    let mut echo = cfg.clone();
    if let Some(sim) = echo.data.simulation.as_mut() {
        *sim = sim.resolved(cfg.model);
    }
    echo.sampler = sampler.clone();
    let manifest = RunManifest {
        manifest_version: MANIFEST_VERSION,
        model: cfg.model,
        posterior: cfg.posterior,
        config: echo,
        scale_note: scale_note(cfg),
        seed: cfg.sampler.seed,
        chains: cfg.chains,
        kept_per_chain: chains[0].n_kept(),
        layout: layout.blocks().to_vec(),
        mode: mode_summary,
        mass: MassSummary {
            requested: cfg.mass,
            used: mass.mode(),
            adapted: sampler.adapt_diag_mass,
            fallback,
            rank: mass.rank(),
            warnings: mass.warnings().to_vec(),
        },
        chain_runs: chains
            .iter()
            .map(|c| ChainSummary {
                chain_id: c.chain_id,
                step_size: c.step_size,
                grad_evals: c.grad_evals,
                divergences: c.divergence_count(),
                burnin_divergences: c.burnin_divergences,
                warnings: c.warnings.clone(),
            })
            .collect(),
        grad_evals,
        divergences: chains.iter().map(Chain::divergence_count).sum(),
        parameters: params,
        derived,
        median_ess,
        ess_per_grad: median_ess / grad_evals.max(1) as f64,
        metrics: model_metrics,
        files,
        timing_file: TIMING_FILE.into(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    write_json(
        &dir.join(TIMING_FILE),
        &Timing {
            wall_seconds: wall.elapsed().as_secs_f64(),
            mode_seconds,
            sampling_seconds,
        },
    )?;
    validate_run_dir(&dir)?;
    Ok(RunOutcome {
        manifest,
        tables,
        chains,
        dataset: dataset.clone(),
        output_dir: dir,
    })
}

fn scale_note(cfg: &ExperimentConfig) -> Option<String> {
    (cfg.model == ModelKind::Procrustes).then(|| {
        "reduced synthetic configuration: simulated low-dimensional batches and a desk-scale run length \
         stand in for the full single-cell study"
            .to_string()
    })
}

/// Checks every artifact listed in a run directory's manifest.
pub fn validate_run_dir(dir: &Path) -> Result<()> {
    let manifest_path = dir.join(MANIFEST_FILE);
    validate_json(
        &manifest_path,
        &[
            "manifest_version",
            "model",
            "posterior",
            "config",
            "seed",
            "mode",
            "mass",
            "divergences",
            "parameters",
            "median_ess",
            "files",
            "timing_file",
        ],
    )?;
    let manifest = RunManifest::load(&manifest_path)?;
    let n_params: usize = manifest.layout.iter().map(|b| b.len).sum();
    for file in &manifest.files {
        let path = dir.join(file);
        if file.starts_with("chain_") {
            let header = validate_csv(&path, 0)?;
            let expected = n_params + manifest.derived.len() + CHAIN_META_COLUMNS.len();
            if header.len() != expected || !header.ends_with(&CHAIN_META_COLUMNS.map(String::from)) {
                return Err(Error::Schema {
                    path: path.display().to_string(),
                    reason: format!("expected {expected} columns ending with the sampler metadata"),
                });
            }
        } else if file == SUMMARY_FILE {
            let header = validate_csv(&path, 1)?;
            if header != SUMMARY_HEADER {
                return Err(Error::Schema {
                    path: path.display().to_string(),
                    reason: "unexpected summary header".into(),
                });
            }
        } else if file == ACF_FILE {
            let header = validate_csv(&path, 0)?;
            if header.first().map(String::as_str) != Some("lag") {
                return Err(Error::Schema {
                    path: path.display().to_string(),
                    reason: "first column must be `lag`".into(),
                });
            }
        } else if file == DATASET_FILE {
            validate_json(&path, &["model"])?;
        } else {
            validate_json(&path, &[])?;
        }
    }
    validate_json(&dir.join(&manifest.timing_file), &["wall_seconds"])?;
    Ok(())
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, var.sqrt())
}

fn column(ctx: &MetricContext, name: &str) -> Result<Vec<f64>> {
    ctx.pooled
        .column(name)
        .ok_or_else(|| Error::InvalidState(format!("missing column `{name}`")))
}

fn normal_means_metrics(m: &NormalMeansModel, d: &NormalMeansDataset, ctx: &MetricContext) -> Result<Value> {
    let beta = column(ctx, "beta")?;
    let (beta_mean, beta_sd) = mean_sd(&beta);
    let n = m.n();
    let mut z_var = 0.0;
    let mut z_mean = Vec::with_capacity(n);
    for i in 0..n {
        let (mu, sd) = mean_sd(&column(ctx, &format!("z[{i}]"))?);
        z_var += sd * sd / n as f64;
        z_mean.push(mu);
    }
    Ok(json!({
        "beta0": d.beta0,
        "tau": d.tau,
        "n": n,
        "beta_mean": beta_mean,
        "beta_sd": beta_sd,
        "z_mean_posterior_variance": z_var,
        "z_posterior_means": z_mean,
        "z_rmse_to_truth": (z_mean.iter().zip(&d.z).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64).sqrt(),
    }))
}

fn flow_metrics(d: &FlowDataset, ctx: &MetricContext) -> Result<Value> {
    let e = d.beta0.len();
    let lp = max_flow(&d.spec, &d.beta0);
    let mut edges = Vec::with_capacity(e);
    let (mut z_within, mut covered) = (0, 0);
    for k in 0..e {
        let (z_mean, z_sd) = mean_sd(&column(ctx, &format!("flow[{k}]"))?);
        let beta = sorted(column(ctx, &format!("beta[{k}]"))?);
        let (beta_mean, beta_sd) = mean_sd(&beta);
        let (q05, q95) = (quantile_sorted(&beta, 0.05), quantile_sorted(&beta, 0.95));
        let z_dev = (z_mean - d.z0[k]) / z_sd;
        let within = z_dev.abs() <= 3.0;
        let cov = (q05..=q95).contains(&d.beta0[k]);
        z_within += within as usize;
        covered += cov as usize;
        edges.push(json!({
            "edge": k,
            "from": d.spec.edges[k].0,
            "to": d.spec.edges[k].1,
            "z0": d.z0[k],
            "z_mean": z_mean,
            "z_sd": z_sd,
            "z_dev_sd": z_dev,
            "z_within_3sd": within,
            "beta0": d.beta0[k],
            "c": d.spec.designed_capacity[k],
            "beta_mean": beta_mean,
            "beta_sd": beta_sd,
            "beta_q05": q05,
            "beta_q95": q95,
            "beta0_covered_90": cov,
        }));
    }
    Ok(json!({
        "max_flow_value": lp.value,
        "lp_cut_edges": lp.cut_edges,
        "n_edges": e,
        "z_within_3sd": z_within,
        "beta0_covered_90": covered,
        "edges": edges,
    }))
}

/// Stacks the columns of every batch into one row per cell.
fn cells(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let d = blocks[0].nrows();
    let n: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, d);
    let mut r = 0;
    for b in blocks {
        out.rows_mut(r, b.ncols()).copy_from(&b.transpose());
        r += b.ncols();
    }
    out
}

fn clustering_scores(points: &DMatrix<f64>, types: &[usize], batches: &[usize], k: usize, seed: u64) -> Result<Value> {
    let db_type = davies_bouldin(points, types)?;
    let db_batch = davies_bouldin(points, batches)?;
    let pcs = principal_components(points, 2);
    let db_type_pc2 = davies_bouldin(&pcs, types)?;
    let db_batch_pc2 = davies_bouldin(&pcs, batches)?;
    let clusters = kmeans(points, k, seed, 100);
    let nmi = normalized_mutual_information(&clusters, types)?;
    Ok(json!({
        "db_cell_type": db_type.index,
        "db_batch": db_batch.index,
        "db_cell_type_pc2": db_type_pc2.index,
        "db_batch_pc2": db_batch_pc2.index,
        "nmi": nmi.value,
    }))
}

fn procrustes_metrics(m: &ProcrustesModel, d: &ProcrustesDataset, ctx: &MetricContext) -> Result<Value> {
    let n_b = m.n_batches();
    let k = d.cell_types.iter().max().map_or(1, |t| t + 1);
    let types: Vec<usize> = (0..n_b).flat_map(|_| d.cell_types.iter().copied()).collect();
    let batch_labels: Vec<usize> = (0..n_b).flat_map(|b| std::iter::repeat_n(b, m.dims().1)).collect();
    let mut orth = Vec::with_capacity(n_b);
    for b in 0..n_b {
        let errs = column(ctx, &format!("orth_err[{b}]"))?;
        orth.push(errs.iter().filter(|e| **e <= ORTHOGONALITY_TOL).count() as f64 / errs.len() as f64);
    }
    let all_ok = (0..ctx.sampling.nrows())
        .filter(|&i| {
            m.orthogonality_errors(ctx.sampling.row(i).iter().copied().collect::<Vec<_>>().as_slice())
                .iter()
                .all(|e| *e <= ORTHOGONALITY_TOL)
        })
        .count() as f64
        / ctx.sampling.nrows() as f64;

    // Point estimate: the kept draw whose k-means clustering agrees best with
    // the cell types.
    let n = ctx.sampling.nrows();
    let stride = (n / POINT_ESTIMATE_CANDIDATES).max(1);
    let mut best: Option<(f64, usize)> = None;
    for i in (0..n).step_by(stride) {
        let theta: Vec<f64> = ctx.sampling.row(i).iter().copied().collect();
        let pts = cells(&m.aligned(&theta));
        let nmi = normalized_mutual_information(&kmeans(&pts, k, ctx.seed, 100), &types)?.value;
        if best.is_none_or(|(v, _)| nmi > v) {
            best = Some((nmi, i));
        }
    }
    let (_, idx) = best.expect("at least one draw");
    let theta: Vec<f64> = ctx.sampling.row(idx).iter().copied().collect();
    let bridged = clustering_scores(&cells(&m.aligned(&theta)), &types, &batch_labels, k, ctx.seed)?;
    let raw = clustering_scores(&cells(m.batches()), &types, &batch_labels, k, ctx.seed)?;
    let gpa = clustering_scores(&cells(&align_to_first(m.batches())?), &types, &batch_labels, k, ctx.seed)?;
    Ok(json!({
        "orthogonal_fraction_per_batch": orth,
        "orthogonal_fraction_all_batches": all_ok,
        "orthogonality_tol": ORTHOGONALITY_TOL,
        "point_estimate_draw": idx,
        "scores": {
            "raw": raw,
            "align_to_first": gpa,
            "bridged": bridged,
        },
        "true_scales": d.scales,
    }))
}

fn latent_quadratic_metrics(m: &LatentQuadraticModel, d: &LatentQuadraticDataset, ctx: &MetricContext) -> Result<Value> {
    let n = d.y.len();
    let dim_beta = m.dim_beta();
    let mut z_mean = vec![0.0; n];
    for i in 0..ctx.sampling.nrows() {
        let theta: Vec<f64> = ctx.sampling.row(i).iter().copied().collect();
        let z = m.latent(&theta[..dim_beta], &theta[dim_beta..]);
        for (a, v) in z_mean.iter_mut().zip(z.iter()) {
            *a += v / ctx.sampling.nrows() as f64;
        }
    }
    let rmse = (z_mean.iter().zip(&d.z_true).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64).sqrt();
    let (ma, sa) = mean_sd(&z_mean);
    let (mb, sb) = mean_sd(&d.z_true);
    let corr = z_mean
        .iter()
        .zip(&d.z_true)
        .map(|(a, b)| (a - ma) * (b - mb))
        .sum::<f64>()
        / ((n as f64 - 1.0) * sa * sb);
    let accuracy = z_mean
        .iter()
        .zip(&d.y)
        .filter(|(z, y)| (**z > 0.0) == (**y > 0.5))
        .count() as f64
        / n as f64;
    Ok(json!({
        "n": n,
        "latent_rmse": rmse,
        "latent_correlation": corr,
        "training_accuracy": accuracy,
        "latent_posterior_mean": z_mean,
    }))
}

/// The `z`-variance check for the normal-means model: the mean posterior
/// variance of `z_i` against the closed-form conditional variance at the
/// posterior mean of `β`.
pub fn normal_means_variance_ratio(manifest: &RunManifest, tau: f64, y: &[f64], lambda: f64) -> Result<f64> {
    let beta = manifest
        .parameter("beta")
        .ok_or_else(|| Error::InvalidState("manifest has no beta".into()))?
        .mean;
    let (_, var) = conditional_z_posterior_params(beta, y, tau, lambda)?;
    let z_var = manifest.metrics["z_mean_posterior_variance"]
        .as_f64()
        .ok_or_else(|| Error::InvalidState("missing z variance metric".into()))?;
    Ok(z_var / var)
}
