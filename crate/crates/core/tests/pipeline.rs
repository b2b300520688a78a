use gradbridge::experiment::compare::compare_runs;
use gradbridge::experiment::config::{ExperimentConfig, ModelKind};
use gradbridge::experiment::run::{run_experiment, validate_run_dir, RunManifest, MANIFEST_FILE};
use gradbridge::experiment::simulate::{simulate_dataset, Dataset};
use gradbridge::Error;
use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

const NORMAL_MEANS: &str = r#"
model = "normal_means"
lambda = 50.0

[sampler]
n_iterations = 700
n_burnin = 200
thin = 1
seed = 4

[data.simulation]
seed = 2
n_obs = 12
tau = 1.0
beta0 = [1.0]
"#;

const LATENT: &str = r#"
model = "latent_quadratic"
lambda = 20.0

[sampler]
n_iterations = 300
n_burnin = 100
thin = 1
seed = 1

[data.simulation]
seed = 3
n_obs = 15
"#;

fn config(text: &str, dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml_str(text).unwrap();
    cfg.output_dir = dir.to_path_buf();
    cfg.validate().unwrap();
    cfg
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timing.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn same_config_and_seed_give_byte_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let mut cfg = config(NORMAL_MEANS, &dir);
    cfg.chains = 2;
    run_experiment(&cfg).unwrap();
    let first = snapshot(&dir);
    std::fs::remove_dir_all(&dir).unwrap();
    run_experiment(&cfg).unwrap();
    assert_eq!(first, snapshot(&dir));
    assert!(first.contains_key(MANIFEST_FILE));
    assert!(first.contains_key("chain_0.csv") && first.contains_key("chain_1.csv"));
    validate_run_dir(&dir).unwrap();
}

#[test]
fn different_seed_changes_the_draws() {
    let tmp = tempfile::tempdir().unwrap();
    let a = config(NORMAL_MEANS, &tmp.path().join("a"));
    let mut b = config(NORMAL_MEANS, &tmp.path().join("b"));
    b.sampler.seed += 1;
    run_experiment(&a).unwrap();
    run_experiment(&b).unwrap();
    let read = |d: &Path| std::fs::read(d.join("chain_0.csv")).unwrap();
    assert_ne!(read(&a.output_dir), read(&b.output_dir));
}

#[test]
fn compare_rejects_mismatched_models() {
    let tmp = tempfile::tempdir().unwrap();
    let nm = run_experiment(&config(NORMAL_MEANS, &tmp.path().join("nm"))).unwrap();
    let lq = run_experiment(&config(LATENT, &tmp.path().join("lq"))).unwrap();
    let err = compare_runs(&[nm.clone(), lq]).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)), "{err}");
    let report = compare_runs(&[nm.clone(), nm]).unwrap();
    assert_eq!(report.max_abs_difference(), 0.0);
}

#[test]
fn corrupted_run_directory_fails_validation() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    run_experiment(&config(NORMAL_MEANS, &dir)).unwrap();
    let path = dir.join("chain_0.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen('\n', "\nnot_a_number,", 2)).unwrap();
    assert!(validate_run_dir(&dir).is_err());
}

#[test]
fn config_errors_are_reported() {
    let bad_field = NORMAL_MEANS.replace("thin = 1", "thin = 1\nbogus = 3");
    assert!(ExperimentConfig::from_toml_str(&bad_field).is_err());
    let bad_burnin = config(NORMAL_MEANS, Path::new("x"));
    let mut c = bad_burnin.clone();
    c.sampler.n_burnin = c.sampler.n_iterations;
    assert!(c.validate().is_err());
    let mut c = bad_burnin.clone();
    c.lambda = -1.0;
    assert!(c.validate().is_err());
    let mut c = bad_burnin;
    c.chains = 0;
    assert!(c.validate().is_err());
}

#[test]
fn datasets_round_trip_through_json() {
    let tmp = tempfile::tempdir().unwrap();
    for model in [
        ModelKind::NormalMeans,
        ModelKind::Flow,
        ModelKind::Procrustes,
        ModelKind::LatentQuadratic,
    ] {
        let cfg = ExperimentConfig::new(model);
        let ds = simulate_dataset(model, &cfg.resolved_simulation().unwrap()).unwrap();
        let path = tmp.path().join(format!("{}.json", model.name()));
        ds.save(&path).unwrap();
        let back = Dataset::load(&path).unwrap();
        assert_eq!(back.model(), model);
        assert_eq!(serde_json::to_string(&back).unwrap(), serde_json::to_string(&ds).unwrap());
    }
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gradbridge"))
}

#[test]
fn cli_simulate_run_and_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("nm.toml");
    std::fs::write(&cfg_path, NORMAL_MEANS).unwrap();
    let sim_dir = tmp.path().join("sim");
    let out = cli()
        .args(["simulate", cfg_path.to_str().unwrap(), "--seed", "9", "--output-dir"])
        .arg(&sim_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(Dataset::load(sim_dir.join("dataset.json")).is_ok());

    let runs: Vec<_> = ["r1", "r2"].iter().map(|r| tmp.path().join(r)).collect();
    for (i, dir) in runs.iter().enumerate() {
        let out = cli()
            .args(["run", cfg_path.to_str().unwrap(), "--chains", "2", "--seed"])
            .arg((i + 1).to_string())
            .arg("--output-dir")
            .arg(dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let m = RunManifest::load(dir.join(MANIFEST_FILE)).unwrap();
        assert_eq!(m.chains, 2);
        assert_eq!(m.seed, (i + 1) as u64);
    }

    let cmp_dir = tmp.path().join("cmp");
    let out = cli()
        .arg("compare")
        .args(&runs)
        .arg("--output-dir")
        .arg(&cmp_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("sd[0]") && text.contains("sd[1]"));
    let csv = std::fs::read_to_string(cmp_dir.join("compare_sd.csv")).unwrap();
    assert!(csv.starts_with("name,"));
}

#[test]
fn cli_reports_errors_with_exit_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("bad.toml");
    std::fs::write(&cfg_path, "model = \"normal_means\"\nlambda = -3.0\n[data.simulation]\nseed = 1\n").unwrap();
    let out = cli().args(["run", cfg_path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let missing = cli().args(["compare", "/nonexistent/manifest.json"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn cli_check_suite_passes() {
    let out = cli().arg("check").output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(!text.contains("FAIL"));
    assert!(text.contains("sampler/leapfrog_reversibility"));
}
