//! The bridged flow-network posterior on simulated measurements: posterior
//! flows against the LP optimum and capacity intervals against the truth.
//!
//! Pass `--full` for the 12,000-iteration schedule.

use gradbridge::experiment::config::{ExperimentConfig, ModelKind};
use gradbridge::experiment::run::run_experiment;

fn main() -> gradbridge::Result<()> {
    let full = std::env::args().any(|a| a == "--full");
    let mut cfg = ExperimentConfig::new(ModelKind::Flow);
    if !full {
        cfg.sampler.n_iterations = 3000;
        cfg.sampler.n_burnin = 1000;
        cfg.sampler.thin = 2;
    }
    cfg.sampler.seed = 1;
    cfg.output_dir = std::env::temp_dir().join("gradbridge_flow_network");
    let m = run_experiment(&cfg)?;

    let metrics = &m.metrics;
    println!(
        "max flow {:.3}, cut edges {}",
        metrics["max_flow_value"], metrics["lp_cut_edges"]
    );
    println!(
        "{:>4} {:>7} {:>7} {:>7} {:>6} | {:>6} {:>15} {:>4}",
        "edge", "z0", "mean", "sd", "dev", "beta0", "90% interval", "cov"
    );
    for e in metrics["edges"].as_array().into_iter().flatten() {
        let f = |k: &str| e[k].as_f64().unwrap_or(f64::NAN);
        println!(
            "{:>4} {:>7.3} {:>7.3} {:>7.3} {:>6.2} | {:>6.3} [{:>6.3}, {:>6.3}] {:>4}",
            e["edge"],
            f("z0"),
            f("z_mean"),
            f("z_sd"),
            f("z_dev_sd"),
            f("beta0"),
            f("beta_q05"),
            f("beta_q95"),
            if e["beta0_covered_90"].as_bool() == Some(true) { "yes" } else { "no" }
        );
    }
    println!(
        "z within 3 sd on {} edges, beta0 covered on {} edges",
        metrics["z_within_3sd"], metrics["beta0_covered_90"]
    );
    println!("median ESS {:.0}, divergences {}", m.median_ess, m.divergences);
    println!("artifacts in {}", cfg.output_dir.display());
    Ok(())
}
