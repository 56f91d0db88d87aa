use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bcos::cli::{cmd_sweep, ExperimentConfig};
use bcos::optim::Algorithm;

fn bcos(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bcos"))
        .args(args)
        .current_dir(dir)
        .env_remove("OUTPUT_DIR")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const MINIMAL: &str = "dim = 3\nsteps = 40\nn_seeds = 4\nalpha = 0.05\n";

#[test]
fn run_writes_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let out = bcos(&["run", "--config", &cfg, "--out", "o"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("o/trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,mean_dist_sq,se_dist_sq,alpha_t,aiming_min,sigma_t,mean_loss,se_loss"
    );
    assert_eq!(lines.count(), 41);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["files"][0]["file"], "trajectory.csv");
    assert_eq!(manifest["base_seed"], 0);
}

#[test]
fn repeated_runs_have_identical_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    for out in ["a", "b"] {
        assert!(bcos(&["run", "--config", &cfg, "--out", out], dir.path())
            .status
            .success());
    }
    let read = |d: &str| std::fs::read(dir.path().join(d).join("manifest.json")).unwrap();
    assert_eq!(read("a"), read("b"));
    // a thread count does not change the output
    assert!(bcos(
        &["run", "--config", &cfg, "--out", "c", "--parallel", "3"],
        dir.path()
    )
    .status
    .success());
    assert_eq!(read("a"), read("c"));
}

#[test]
fn manifest_hash_tracks_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    assert!(bcos(&["run", "--config", &cfg, "--out", "a"], dir.path())
        .status
        .success());
    assert!(bcos(
        &["run", "--config", &cfg, "--out", "b", "--seeds", "5"],
        dir.path()
    )
    .status
    .success());
    let hash = |d: &str| {
        let m: serde_json::Value = serde_json::from_slice(
            &std::fs::read(dir.path().join(d).join("manifest.json")).unwrap(),
        )
        .unwrap();
        m["content_hash"].as_str().unwrap().to_owned()
    };
    assert_ne!(hash("a"), hash("b"));
}

#[test]
fn output_dir_env_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let out = Command::new(env!("CARGO_BIN_EXE_bcos"))
        .args(["run", "--config", &cfg])
        .current_dir(dir.path())
        .env("OUTPUT_DIR", "from_env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("from_env/trajectory.csv").exists());
}

#[test]
fn decoupled_overshoot_is_a_schedule_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "alpha = 2.0\nweight_decay = 1.0\ndecoupled = true\n",
    );
    let out = bcos(&["run", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`schedule`"));
}

#[test]
fn typos_and_bad_types_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    for body in ["alpah = 0.1\n", "steps = \"many\"\n", "n_seeds = 1\n"] {
        let cfg = write_config(dir.path(), body);
        let out = bcos(&["run", "--config", &cfg], dir.path());
        assert_eq!(out.status.code(), Some(2), "{body}");
    }
}

#[test]
fn counterexamples_print_two_sections() {
    let dir = tempfile::tempdir().unwrap();
    let out = bcos(&["counterexamples", "--out", "o"], dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("== ")).count(), 2);
    let csv = std::fs::read_to_string(dir.path().join("o/verify.csv")).unwrap();
    assert!(csv.starts_with("section,name,observed,bound,tolerance,relation,pass"));
}

#[test]
fn verify_with_only_counterexamples_has_two_sections() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "verify_chung = false\nverify_ratio_expansion = false\nverify_estimator_stats = false\n",
    );
    let out = bcos(&["verify", "--config", &cfg, "--out", "o"], dir.path());
    assert!(out.status.success());
    assert_eq!(
        String::from_utf8_lossy(&out.stdout)
            .lines()
            .filter(|l| l.starts_with("== "))
            .count(),
        2
    );
}

#[test]
fn verify_defaults_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = bcos(&["verify", "--out", "o"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("== ")).count(), 5);
    assert!(!stdout.contains("[FAIL]"));
}

#[test]
fn wrong_fixture_beta_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "verify_counterexamples = false\nverify_chung = false\nverify_ratio_expansion = false\nfixture_beta = 0.5\n",
    );
    let out = bcos(&["verify", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[FAIL]"));
}

fn sweep_config(dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        dim: 3,
        steps: 200,
        n_seeds: 2,
        output_dir: dir.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

#[test]
fn beta2_sweep_has_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        algorithm: Algorithm::Adam,
        sweep_param: Some("beta2".into()),
        sweep_values: vec![0.8, 0.9, 0.95, 0.975, 0.99],
        ..sweep_config(dir.path())
    };
    assert_eq!(cmd_sweep(&cfg).unwrap().len(), 5);
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(csv.starts_with("beta2,final_mean_dist_sq,final_mean_loss,slope,diverged\n"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn two_dimensional_sweep_is_row_major() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        sweep_param: Some("alpha".into()),
        sweep_values: vec![0.01, 0.02, 0.03],
        sweep_param2: Some("beta1".into()),
        sweep_values2: vec![0.5, 0.8, 0.9],
        ..sweep_config(dir.path())
    };
    let rows = cmd_sweep(&cfg).unwrap();
    let order: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.values[0].1, r.values[1].1))
        .collect();
    let mut expected = Vec::new();
    for a in [0.01, 0.02, 0.03] {
        for b in [0.5, 0.8, 0.9] {
            expected.push((a, b));
        }
    }
    assert_eq!(order, expected);
}

/// Plain SGD on `h = 1` contracts by `|1 − α|` per step, so it diverges
/// exactly when `α > 2`; the flag must flip once along an increasing grid.
#[test]
fn divergence_flag_flips_at_the_stability_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let alphas = vec![0.5, 1.0, 1.5, 1.9, 2.1, 2.5, 3.0];
    let cfg = ExperimentConfig {
        algorithm: Algorithm::Sgd,
        noise_std: bcos::cli::PerCoord::Scalar(0.1),
        steps: 2000,
        sweep_param: Some("alpha".into()),
        sweep_values: alphas.clone(),
        ..sweep_config(dir.path())
    };
    let flags: Vec<bool> = cmd_sweep(&cfg)
        .unwrap()
        .iter()
        .map(|r| r.diverged)
        .collect();
    let expected: Vec<bool> = alphas.iter().map(|a| *a > 2.0).collect();
    assert_eq!(flags, expected);
}

#[test]
fn empty_sweep_grid_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        sweep_param: Some("alpha".into()),
        ..sweep_config(dir.path())
    };
    assert_eq!(cmd_sweep(&cfg).unwrap_err().exit_code(), 2);
}

#[test]
fn shipped_configs_are_valid() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap();
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        count += 1;
    }
    assert_eq!(count, 3);
}
