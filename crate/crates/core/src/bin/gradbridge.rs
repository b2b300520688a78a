use clap::{Parser, Subcommand};
use gradbridge::experiment::check::run_check_suite;
use gradbridge::experiment::compare::compare_runs;
use gradbridge::experiment::config::ExperimentConfig;
use gradbridge::experiment::run::{load_or_simulate, run_experiment, RunManifest, MANIFEST_FILE};
use gradbridge::{Error, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gradbridge", version, about = "Gradient-bridged posterior sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Sampler seed for `run`, simulation seed for `simulate`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Number of parallel chains.
    #[arg(long, global = true)]
    chains: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a configured posterior and write draws, summaries and a manifest.
    Run { config: PathBuf },
    /// Simulate the config's dataset and write it to `dataset.json`.
    Simulate { config: PathBuf },
    /// Compare finished runs given their manifests or run directories.
    Compare {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
    },
    /// Run the gradient, duality and oracle property suite.
    Check,
}

fn load_config(cli: &Cli, path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(c) = cli.chains {
        cfg.chains = c;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST_FILE)
    } else {
        p.to_path_buf()
    }
}

fn execute(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Run { config } => {
            let mut cfg = load_config(cli, config)?;
            if let Some(s) = cli.seed {
                cfg.sampler.seed = s;
            }
            let m = run_experiment(&cfg)?;
            println!(
                "{}: {} chains x {} draws, median ESS {:.1}, ESS/grad {:.3e}, divergences {}",
                m.label(),
                m.chains,
                m.kept_per_chain,
                m.median_ess,
                m.ess_per_grad,
                m.divergences
            );
            println!("wrote {}", cfg.output_dir.display());
            Ok(true)
        }
        Command::Simulate { config } => {
            let mut cfg = load_config(cli, config)?;
            if let (Some(s), Some(sim)) = (cli.seed, cfg.data.simulation.as_mut()) {
                sim.seed = Some(s);
            }
            let ds = load_or_simulate(&cfg)?;
            std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
            let path = cfg.output_dir.join("dataset.json");
            ds.save(&path)?;
            println!("wrote {}", path.display());
            Ok(true)
        }
        Command::Compare { manifests } => {
            let runs = manifests
                .iter()
                .map(|p| RunManifest::load(manifest_path(p)))
                .collect::<Result<Vec<_>>>()?;
            let report = compare_runs(&runs)?;
            print!("{}", report.to_text());
            if let Some(dir) = &cli.output_dir {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let path = dir.join("compare_sd.csv");
                std::fs::write(&path, report.sd_csv()).map_err(|e| Error::io(&path, e))?;
                println!("wrote {}", path.display());
            }
            Ok(true)
        }
        Command::Check => {
            let report = run_check_suite()?;
            print!("{}", report.to_text());
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
