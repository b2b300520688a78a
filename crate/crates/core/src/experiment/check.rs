//! The gradient, duality and oracle property suite behind `gradbridge check`.

use super::simulate::{bundled_network, random_orthogonal, simulate_flow_data, simulate_latent_quadratic_data};
use crate::bridge::{check_gradient, grad_log_posterior, log_posterior, BridgeProblem, KernelConfig};
use crate::error::Result;
use crate::lp::{max_flow, min_cut_by_enumeration, verify_cut};
use crate::models::{
    flow_problem, gaussian_kernel_matrix, gibbs_baseline, latent_quadratic_dual, maximize_procrustes_dual,
    procrustes_dual_value, procrustes_svd_solution, solve_dual_root, FlowModelParams, FlowNetworkSpec, GibbsVariant,
    LatentQuadraticModel, NormalMeansModel, ProcrustesModel, ToyModel,
};
use crate::bridge::BridgedPosterior;
use crate::sampler::{leapfrog, FnDensity, LogDensity, MassSpec, PhasePoint};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

pub const GRADIENT_RTOL: f64 = 1e-5;
const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }

    pub fn item(&self, name: &str) -> Option<&CheckItem> {
        self.items.iter().find(|i| i.name == name)
    }

    pub fn to_text(&self) -> String {
        self.items
            .iter()
            .map(|i| format!("{} {}: {}\n", if i.passed { "PASS" } else { "FAIL" }, i.name, i.detail))
            .collect()
    }
}

fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// Checks the full posterior gradient of `problem` at `theta` against
/// central differences.
pub fn posterior_gradient_check<P: BridgeProblem + ?Sized>(
    name: &str,
    problem: &P,
    theta: &[f64],
    cfg: &KernelConfig,
) -> CheckItem {
    let f = |t: &[f64]| {
        let (b, z) = problem.split(t);
        log_posterior(problem, b, z, cfg).ok()
    };
    let g = |t: &[f64]| {
        let (b, z) = problem.split(t);
        grad_log_posterior(problem, b, z, cfg)
            .map(|v| v.as_slice().to_vec())
            .unwrap_or_else(|_| vec![f64::NAN; t.len()])
    };
    let report = check_gradient(f, g, theta, FD_STEP, GRADIENT_RTOL);
    CheckItem {
        name: format!("gradient/{name}"),
        passed: report.passed() && report.untestable() == 0,
        detail: format!(
            "{} coordinates, max rel error {:.2e}, untestable {}",
            theta.len(),
            report.max_rel_error(),
            report.untestable()
        ),
    }
}

fn perturbed(mut theta: Vec<f64>, scale: f64) -> Vec<f64> {
    for (i, v) in theta.iter_mut().enumerate() {
        *v += scale * ((i * 7 % 5) as f64 - 2.0);
    }
    theta
}

/// A model from the zoo with an interior test point and kernel settings.
pub struct ZooCase {
    pub name: String,
    pub problem: Box<dyn BridgeProblem>,
    pub theta: Vec<f64>,
    pub cfg: KernelConfig,
}

impl ZooCase {
    fn new(name: &str, problem: impl BridgeProblem + 'static, theta: Vec<f64>, cfg: KernelConfig) -> Self {
        Self {
            name: name.into(),
            problem: Box::new(problem),
            theta,
            cfg,
        }
    }
}

/// Every zoo model and both Gibbs comparators at interior points.
pub fn zoo() -> Result<Vec<ZooCase>> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(20);

    let toy = ToyModel::new(1.5, 0.7, vec![0.3, -1.2, 2.0])?.with_prior_sd(3.0);
    let theta = perturbed(toy.initial_point(), 0.1);
    out.push(ZooCase::new("toy", toy, theta, KernelConfig::with_lambda(4.0)));

    let y: Vec<f64> = (0..8).map(|_| StandardNormal.sample(&mut rng)).collect();
    let nm = NormalMeansModel::new(1.0, y.clone())?;
    let theta = perturbed(nm.initial_point(), 0.05);
    let cal = NormalMeansModel::new(1.0, y)?.calibrated(10.0)?;
    let joint = gibbs_baseline(nm.clone(), GibbsVariant::JointShrinkage, 3.0)?;
    out.push(ZooCase::new("normal_means", nm, theta.clone(), KernelConfig::with_lambda(10.0)));
    out.push(ZooCase::new("normal_means_calibrated", cal, theta.clone(), KernelConfig::with_lambda(10.0)));
    out.push(ZooCase::new("normal_means_gibbs_joint", joint, theta, KernelConfig::with_lambda(3.0)));

    let spec = bundled_network();
    let beta0 = spec.designed_capacity.clone();
    let ds = simulate_flow_data(&spec, &beta0, 50, 0.5, 0.5, 3)?;
    let cfg = KernelConfig::default();
    let flow = flow_problem(ds.spec.clone(), ds.data(), FlowModelParams::default(), &cfg)?;
    let z = flow.interior_flow(&beta0)?;
    let mut theta: Vec<f64> = beta0.iter().map(|c| c.ln()).collect();
    theta.extend([0.3, -0.4]);
    theta.extend(flow.free_edges().iter().map(|&k| z[k]));
    let plain = gibbs_baseline(flow.clone(), GibbsVariant::Plain, cfg.lambda)?;
    out.push(ZooCase::new("flow", flow, theta.clone(), cfg));
    out.push(ZooCase::new("flow_gibbs_plain", plain, theta, cfg));

    let batches = vec![randn(&mut rng, 2, 4), randn(&mut rng, 2, 4)];
    let pm = ProcrustesModel::new(batches)?;
    let theta = perturbed(pm.initial_point(), 0.05);
    out.push(ZooCase::new("procrustes", pm, theta, KernelConfig::with_lambda(3.0)));

    let lq = simulate_latent_quadratic_data(12, 5, 4)?;
    let lm = LatentQuadraticModel::new(&lq.locations(), lq.y.clone())?;
    let mut theta = perturbed(lm.initial_point(), 0.05);
    theta[0] = 0.3;
    theta[1] = -0.2;
    out.push(ZooCase::new("latent_quadratic", lm, theta, KernelConfig::with_lambda(5.0)));
    Ok(out)
}

/// Gradient checks for every model in the zoo and the Gibbs comparators.
pub fn gradient_checks() -> Result<Vec<CheckItem>> {
    Ok(zoo()?
        .iter()
        .map(|c| posterior_gradient_check(&c.name, c.problem.as_ref(), &c.theta, &c.cfg))
        .collect())
}

/// Strong and weak duality for the Procrustes dual on random `d × n`
/// instances.
pub fn procrustes_duality_check(instances: usize, d: usize, n: usize, rotations: usize, seed: u64) -> Result<Vec<CheckItem>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_gap: f64 = 0.0;
    let mut violations = 0;
    for _ in 0..instances {
        let (beta, y) = (randn(&mut rng, d, n), randn(&mut rng, d, n));
        let opt = maximize_procrustes_dual(&beta, &y, 1e-10)?;
        let primal = procrustes_svd_solution(&beta, &y)?.objective(&beta, &y);
        worst_gap = worst_gap.max((opt.value - primal).abs());
        let dual = procrustes_dual_value(&opt.w, &beta, &y)?;
        for _ in 0..rotations {
            let r = random_orthogonal(d, &mut rng);
            if dual > (&r * &y - &beta).norm_squared() + 1e-9 {
                violations += 1;
            }
        }
    }
    Ok(vec![
        CheckItem {
            name: "duality/procrustes_strong".into(),
            passed: worst_gap <= 1e-6,
            detail: format!("{instances} instances of {d}x{n}, max |dual - primal| {worst_gap:.2e}"),
        },
        CheckItem {
            name: "duality/procrustes_weak".into(),
            passed: violations == 0,
            detail: format!("{} random rotations, {violations} violations", instances * rotations),
        },
    ])
}

/// Solves the primal stationarity condition `z = Q(y − σ(z))` by Newton's
/// method, without inverting `Q`.
pub fn latent_quadratic_primal_minimizer(y: &[f64], q: &DMatrix<f64>, tol: f64) -> Option<DVector<f64>> {
    let n = y.len();
    let yv = DVector::from_column_slice(y);
    let mut z: DVector<f64> = DVector::zeros(n);
    for _ in 0..200 {
        let s = z.map(|v| 1.0 / (1.0 + (-v).exp()));
        let f = &z - q * (&yv - &s);
        if f.amax() < tol {
            return Some(z);
        }
        let ds = s.map(|p| p * (1.0 - p));
        let jac = DMatrix::identity(n, n) + q * DMatrix::from_diagonal(&ds);
        let step = jac.lu().solve(&f)?;
        z -= step;
    }
    None
}

/// Dual gradient against finite differences, and the dual root against the
/// primal minimizer.
pub fn latent_quadratic_duality_check(seed: u64) -> Result<Vec<CheckItem>> {
    let ds = simulate_latent_quadratic_data(20, 6, seed)?;
    let q = gaussian_kernel_matrix(&ds.locations(), 1.5, 2.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha = DVector::from_iterator(
        20,
        ds.y.iter().map(|y| rng.random_range(0.1..0.9) - y),
    );
    let (_, grad) = latent_quadratic_dual(&alpha, &ds.y, &q)?;
    let f = |a: &[f64]| latent_quadratic_dual(&DVector::from_column_slice(a), &ds.y, &q).ok().map(|v| v.0);
    let g = |_: &[f64]| grad.as_slice().to_vec();
    let report = check_gradient(f, g, alpha.as_slice(), FD_STEP, GRADIENT_RTOL);
    let mut out = vec![CheckItem {
        name: "duality/latent_quadratic_gradient".into(),
        passed: report.passed() && report.untestable() == 0,
        detail: format!("n = 20, max rel error {:.2e}", report.max_rel_error()),
    }];

    let ds = simulate_latent_quadratic_data(50, 6, seed + 1)?;
    let q = gaussian_kernel_matrix(&ds.locations(), 1.5, 2.0)?;
    let root = solve_dual_root(&ds.y, &q, 1e-12)?;
    let z_dual = -(&q * &root);
    let err = latent_quadratic_primal_minimizer(&ds.y, &q, 1e-12)
        .map_or(f64::INFINITY, |z| (z - &z_dual).amax());
    out.push(CheckItem {
        name: "duality/latent_quadratic_primal_recovery".into(),
        passed: err <= 1e-4,
        detail: format!("n = 50, max |z_dual - z_primal| {err:.2e}"),
    });
    Ok(out)
}

/// A random connected DAG on `n` nodes with source 0 and sink `n − 1` in
/// which every edge lies on a source-sink path.
pub fn random_network(n: usize, rng: &mut ChaCha8Rng) -> FlowNetworkSpec {
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for v in 1..n - 1 {
        // one edge in from an earlier node and one out to a later node
        let from = rng.random_range(0..v);
        let to = rng.random_range(v + 1..n);
        for e in [(from, v), (v, to)] {
            if !edges.contains(&e) {
                edges.push(e);
            }
        }
    }
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < 0.3 && !edges.contains(&(u, v)) && !(u == 0 && v == n - 1) {
                edges.push((u, v));
            }
        }
    }
    if n == 2 {
        edges.push((0, 1));
    }
    edges.sort();
    let caps = (0..edges.len()).map(|_| rng.random_range(0.5..5.0)).collect();
    FlowNetworkSpec {
        nodes: (0..n).collect(),
        source: 0,
        sink: n - 1,
        edges,
        designed_capacity: caps,
        free_edge_map: None,
    }
}

/// Maximum flow against cut enumeration on random networks of 2 to 8 nodes.
pub fn max_flow_oracle_check(networks: usize, seed: u64) -> CheckItem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for i in 0..networks {
        let n = 2 + i % 7;
        let spec = random_network(n, &mut rng);
        let caps = spec.designed_capacity.clone();
        let sol = max_flow(&spec, &caps);
        let cut = min_cut_by_enumeration(&spec, &caps);
        let gap = (sol.value - cut).abs();
        worst = worst.max(gap);
        if gap > 1e-9 || !verify_cut(&spec, &caps, &sol) {
            failures.push(i);
        }
    }
    CheckItem {
        name: "oracle/max_flow_min_cut".into(),
        passed: failures.is_empty(),
        detail: format!(
            "{networks} networks of 2-8 nodes, max |flow - cut| {worst:.2e}, failures {failures:?}"
        ),
    }
}

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Runs `steps` leapfrog steps forward, negates the momentum and runs them
/// again. Returns the relative distance to the start, with the momentum
/// negated back.
pub fn leapfrog_round_trip<D: LogDensity + ?Sized>(
    target: &D,
    mass: &MassSpec,
    theta: Vec<f64>,
    p: Vec<f64>,
    eps: f64,
    steps: usize,
) -> Result<f64> {
    let start = PhasePoint::at(target, theta)?;
    let mut z = start.clone();
    z.p = p.clone();
    let mut scratch = vec![0.0; z.theta.len()];
    for _ in 0..steps {
        leapfrog(target, mass, &mut z, eps, &mut scratch)?;
    }
    z.p.iter_mut().for_each(|v| *v = -*v);
    for _ in 0..steps {
        leapfrog(target, mass, &mut z, eps, &mut scratch)?;
    }
    z.p.iter_mut().for_each(|v| *v = -*v);
    Ok(rel_error(&z.theta, &start.theta).max(rel_error(&z.p, &p)))
}

fn gaussian_2d() -> FnDensity<impl Fn(&[f64], &mut [f64]) -> std::result::Result<f64, crate::error::DomainError> + Sync> {
    let prec = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
    FnDensity::new(2, move |x: &[f64], g: &mut [f64]| {
        let v = DVector::from_column_slice(x);
        let pg = &prec * &v;
        g.copy_from_slice((-&pg).as_slice());
        Ok(-0.5 * v.dot(&pg))
    })
}

/// Largest one-step `|ΔH|` over fixed random starts.
fn max_energy_error<D: LogDensity + ?Sized>(target: &D, mass: &MassSpec, starts: &[(Vec<f64>, Vec<f64>)], eps: f64) -> f64 {
    let mut scratch = vec![0.0; target.dim()];
    starts
        .iter()
        .map(|(theta, p)| {
            let mut z = PhasePoint::at(target, theta.clone()).expect("finite start");
            z.p = p.clone();
            let h0 = z.hamiltonian(mass);
            leapfrog(target, mass, &mut z, eps, &mut scratch).expect("smooth target");
            (z.hamiltonian(mass) - h0).abs()
        })
        .fold(0.0, f64::max)
}

/// Reversibility on every zoo model, and third-order one-step energy error
/// on a 2-D Gaussian.
pub fn leapfrog_checks() -> Result<Vec<CheckItem>> {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let cases = zoo()?;
    for c in &cases {
        let target = BridgedPosterior::new(c.problem.as_ref(), c.cfg);
        let mass = MassSpec::identity(c.theta.len());
        let p: Vec<f64> = (0..c.theta.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        match leapfrog_round_trip(&target, &mass, c.theta.clone(), p, 1e-3, 20) {
            Ok(err) if err <= 1e-12 => worst = worst.max(err),
            Ok(err) => {
                worst = worst.max(err);
                failures.push(c.name.clone());
            }
            Err(_) => failures.push(c.name.clone()),
        }
    }

    let target = gaussian_2d();
    let mass = MassSpec::identity(2);
    let starts: Vec<(Vec<f64>, Vec<f64>)> = (0..100)
        .map(|_| {
            let t = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
            let p = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
            (t, p)
        })
        .collect();
    let eps: Vec<f64> = (0..5).map(|k| 0.2 / 2f64.powi(k)).collect();
    let drift: Vec<f64> = eps.iter().map(|e| max_energy_error(&target, &mass, &starts, *e)).collect();
    let ratios: Vec<f64> = drift.windows(2).map(|w| w[0] / w[1]).collect();
    let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(vec![
        CheckItem {
            name: "sampler/leapfrog_reversibility".into(),
            passed: failures.is_empty(),
            detail: format!(
                "{} zoo models, 20 steps out and back, max rel error {worst:.2e}, failures {failures:?}",
                cases.len()
            ),
        },
        CheckItem {
            name: "sampler/energy_error_order".into(),
            passed: min_ratio >= 6.0,
            detail: format!(
                "max one-step |dH| over 100 starts shrinks by {} per halving of eps (need >= 6)",
                ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>().join(", ")
            ),
        },
    ])
}

/// The whole suite.
pub fn run_check_suite() -> Result<CheckReport> {
    let mut items = gradient_checks()?;
    items.extend(procrustes_duality_check(50, 3, 5, 1000, 5)?);
    items.extend(latent_quadratic_duality_check(6)?);
    items.push(max_flow_oracle_check(140, 7));
    items.extend(leapfrog_checks()?);
    Ok(CheckReport { items })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_networks_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..50 {
            let spec = random_network(2 + i % 7, &mut rng);
            spec.validate().unwrap();
        }
    }

    #[test]
    fn suite_passes() {
        let report = run_check_suite().unwrap();
        assert!(report.passed(), "{}", report.to_text());
    }
}
