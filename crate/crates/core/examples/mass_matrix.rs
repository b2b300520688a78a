//! The projection mass matrix on the flow-network posterior: its two-valued
//! spectrum at the mode, and sampling efficiency against identity and adapted
//! diagonal masses on the same seed and schedule.

use gradbridge::bridge::{BridgeProblem, BridgedPosterior, KernelConfig};
use gradbridge::experiment::config::{ExperimentConfig, MassChoice, ModelKind};
use gradbridge::experiment::run::run_experiment;
use gradbridge::experiment::simulate::{bundled_network, simulate_flow_data};
use gradbridge::models::{flow_problem, FlowModelParams};
use gradbridge::sampler::{build_mass_inverse, find_posterior_mode, ModeOptions, DEFAULT_TAU_RIDGE};
use nalgebra::SymmetricEigen;

fn main() -> gradbridge::Result<()> {
    let spec = bundled_network();
    let data = simulate_flow_data(&spec, &spec.designed_capacity, 1000, 0.5, 0.5, 1)?;
    let kernel = KernelConfig::default();
    let model = flow_problem(data.spec.clone(), data.data(), FlowModelParams::default(), &kernel)?;
    let posterior = BridgedPosterior::new(&model, kernel);
    let mode = find_posterior_mode(&posterior, &model.initial_point(), ModeOptions::default());
    let (b, z) = model.split(&mode.point);
    let mass = build_mass_inverse(&model.g_matrix(b, z), DEFAULT_TAU_RIDGE)?;
    let mut eig: Vec<f64> = SymmetricEigen::new(mass.inv_mass()).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let damped = eig.iter().filter(|v| **v < 0.5).count();
    println!(
        "inverse mass: {damped} eigenvalues at {:.4} (rank of G), {} at {:.4}",
        eig[0],
        eig.len() - damped,
        eig[eig.len() - 1]
    );

    for choice in [MassChoice::Projection, MassChoice::DefaultDiag, MassChoice::Identity] {
        let mut cfg = ExperimentConfig::new(ModelKind::Flow);
        cfg.mass = choice;
        cfg.sampler.n_iterations = 4000;
        cfg.sampler.n_burnin = 1000;
        cfg.sampler.thin = 3;
        cfg.sampler.seed = 1;
        cfg.output_dir = std::env::temp_dir().join(format!("gradbridge_mass/{}", choice.name()));
        let m = run_experiment(&cfg)?;
        println!(
            "{:<13} median ESS {:>7.1}, gradients {:>8}, ESS per gradient {:.2e}, divergences {}",
            choice.name(),
            m.median_ess,
            m.grad_evals,
            m.ess_per_grad,
            m.divergences
        );
    }
    Ok(())
}
