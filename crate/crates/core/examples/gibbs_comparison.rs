//! Bridged versus Gibbs posteriors on the flow network: the plain Gibbs
//! posterior ignores the sub-problem, the joint one shrinks the loss itself.

use gradbridge::experiment::compare::compare_runs;
use gradbridge::experiment::config::{ExperimentConfig, MassChoice, ModelKind, PosteriorKind};
use gradbridge::experiment::run::run_experiment;

fn main() -> gradbridge::Result<()> {
    let root = std::env::temp_dir().join("gradbridge_gibbs_comparison");
    let mut runs = Vec::new();
    for (posterior, mass) in [
        (PosteriorKind::GradientBridged, MassChoice::Projection),
        (PosteriorKind::GibbsPlain, MassChoice::DefaultDiag),
        (PosteriorKind::GibbsJoint, MassChoice::DefaultDiag),
    ] {
        let mut cfg = ExperimentConfig::new(ModelKind::Flow);
        cfg.posterior = posterior;
        cfg.mass = mass;
        cfg.sampler.n_iterations = 3000;
        cfg.sampler.n_burnin = 1000;
        cfg.sampler.thin = 2;
        cfg.sampler.seed = 1;
        cfg.output_dir = root.join(posterior.name());
        runs.push(run_experiment(&cfg)?);
    }
    let report = compare_runs(&runs)?;
    println!("{:<10} {:>10} {:>10} {:>10}", "capacity", "bridged", "gibbs", "joint");
    for row in report.sd.iter().filter(|r| r.name.starts_with("beta[")) {
        println!("{:<10} {:>10.4} {:>10.4} {:>10.4}", row.name, row.sd[0], row.sd[1], row.sd[2]);
    }
    let wider = report
        .sd
        .iter()
        .filter(|r| r.name.starts_with("beta[") && r.sd[1] >= r.sd[0])
        .count();
    println!("plain Gibbs sd at least the bridged sd on {wider} capacities");
    Ok(())
}
