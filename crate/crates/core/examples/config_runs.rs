//! Running experiments from TOML configs and comparing them, as the
//! command-line tool does.
//!
//! Usage: `config_runs <config.toml>...` (defaults to the bundled normal
//! means config at two shrinkage strengths).

use gradbridge::experiment::compare::compare_runs;
use gradbridge::experiment::config::ExperimentConfig;
use gradbridge::experiment::run::run_experiment;

fn main() -> gradbridge::Result<()> {
    let paths: Vec<String> = std::env::args().skip(1).collect();
    let configs = if paths.is_empty() {
        let base = ExperimentConfig::from_file(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/normal_means.toml"))?;
        [10.0, 100.0]
            .iter()
            .map(|&lambda| {
                let mut c = base.clone();
                c.lambda = lambda;
                c.output_dir = std::env::temp_dir().join(format!("gradbridge_config_runs/lambda{lambda}"));
                c
            })
            .collect()
    } else {
        paths.iter().map(ExperimentConfig::from_file).collect::<gradbridge::Result<Vec<_>>>()?
    };
    let manifests = configs.iter().map(run_experiment).collect::<gradbridge::Result<Vec<_>>>()?;
    let report = compare_runs(&manifests)?;
    println!("{}", report.to_text().lines().take(manifests.len() + 8).collect::<Vec<_>>().join("\n"));
    println!("largest sd change from the first run {:.4}", report.max_abs_difference());
    Ok(())
}
