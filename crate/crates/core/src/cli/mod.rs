//! Experiment runner: trajectories, sweeps and verifiers driven by a TOML config.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error as ThisError;

pub use config::{ExperimentConfig, PerCoord, ProblemKind, SWEEPABLE};

use crate::analysis::{
    default_window, estimator_catalog, fit_rate, mean_trajectory, verify_chung_recursions,
    verify_ratio_expansion, write_checks_csv, MeanCurve, RatioParams, Report,
};
use crate::error::Error;
use crate::problems::{counterexample_log_aiming, counterexample_quadratic_not_aiming};

/// Noise scales used by the ratio-expansion verifier.
pub const RATIO_SCALES: [f64; 4] = [0.4, 0.2, 0.1, 0.05];

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(Error),
    #[error("run failed: {0}")]
    Run(Error),
    #[error("verification failed: {0}")]
    Verify(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

/// Runs `f` on a pool of `threads` workers; 0 keeps the global pool.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(Error::param("parallel", e.to_string())))?;
    Ok(pool.install(f))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `t,mean_dist_sq,se_dist_sq,alpha_t,aiming_min,sigma_t,mean_loss,se_loss`.
/// Distance columns are blank when the problem has no known minimizer.
pub fn trajectory_csv(curve: &MeanCurve) -> String {
    let mut out =
        String::from("t,mean_dist_sq,se_dist_sq,alpha_t,aiming_min,sigma_t,mean_loss,se_loss\n");
    for i in 0..curve.len() {
        let (d, se) = if curve.has_target() {
            (
                curve.mean_dist_sq[i].to_string(),
                curve.se_dist_sq[i].to_string(),
            )
        } else {
            (String::new(), String::new())
        };
        writeln!(
            out,
            "{},{d},{se},{},{},{},{},{}",
            curve.t[i],
            curve.alpha_t[i],
            fmt_opt(curve.aiming_min[i]),
            fmt_opt(curve.sigma_t[i]),
            curve.mean_loss[i],
            curve.se_loss[i]
        )
        .expect("writing to a String cannot fail");
    }
    out
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Git-style blob hash: SHA-256 of `blob <len>\0` followed by the content.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()));
    h.update(bytes);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub blob_sha256: String,
}

/// Run provenance. Holds no timestamps, so it is a pure function of the outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub base_seed: u64,
    pub n_seeds: usize,
    pub files: Vec<ManifestEntry>,
    /// SHA-256 over `name blob_hash` lines of every file, in order.
    pub content_hash: String,
}

impl Manifest {
    pub fn new(cfg: &ExperimentConfig, files: &[(&str, &[u8])]) -> Self {
        let files: Vec<ManifestEntry> = files
            .iter()
            .map(|(name, bytes)| ManifestEntry {
                file: name.to_string(),
                blob_sha256: blob_hash(bytes),
            })
            .collect();
        let listing: String = files
            .iter()
            .map(|e| format!("{} {}\n", e.file, e.blob_sha256))
            .collect();
        // Where results go and how many threads compute them does not change them.
        let normalized = ExperimentConfig {
            output_dir: PathBuf::new(),
            parallel: 0,
            ..cfg.clone()
        };
        Self {
            config_sha256: sha256_hex(normalized.to_toml_string().as_bytes()),
            base_seed: cfg.base_seed,
            n_seeds: cfg.n_seeds,
            files,
            content_hash: sha256_hex(listing.as_bytes()),
        }
    }

    fn write(&self, dir: &Path) -> CliResult<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_file(&dir.join("manifest.json"), format!("{json}\n").as_bytes())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub curve: MeanCurve,
    pub trajectory_path: PathBuf,
    pub manifest: Manifest,
}

/// Runs the mean trajectory and writes `trajectory.csv` and `manifest.json`.
pub fn cmd_run(cfg: &ExperimentConfig) -> CliResult<RunOutput> {
    cfg.validate().map_err(CliError::Config)?;
    let problem = cfg.build_problem().map_err(CliError::Config)?;
    let spec = cfg.trajectory_spec().map_err(CliError::Config)?;
    let curve = with_threads(cfg.parallel, || {
        mean_trajectory(problem.as_ref(), &spec, cfg.n_seeds, cfg.base_seed)
    })?
    .map_err(CliError::Run)?;
    let csv = trajectory_csv(&curve);
    let trajectory_path = cfg.output_dir.join("trajectory.csv");
    write_file(&trajectory_path, csv.as_bytes())?;
    let manifest = Manifest::new(cfg, &[("trajectory.csv", csv.as_bytes())]);
    manifest.write(&cfg.output_dir)?;
    Ok(RunOutput {
        curve,
        trajectory_path,
        manifest,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub values: Vec<(String, f64)>,
    pub final_mean_dist_sq: Option<f64>,
    pub final_mean_loss: Option<f64>,
    pub slope: Option<f64>,
    pub diverged: bool,
}

fn sweep_grid(cfg: &ExperimentConfig) -> CliResult<Vec<Vec<(String, f64)>>> {
    let empty = || CliError::Config(Error::param("sweep_values", "sweep grid is empty"));
    let name1 = cfg.sweep_param.as_ref().ok_or_else(empty)?;
    if cfg.sweep_values.is_empty() {
        return Err(empty());
    }
    let axis2 = match &cfg.sweep_param2 {
        Some(name) if cfg.sweep_values2.is_empty() => {
            return Err(CliError::Config(Error::param(
                "sweep_values2",
                format!("no values given for `{name}`"),
            )))
        }
        Some(name) => Some((name, &cfg.sweep_values2)),
        None => None,
    };
    let mut grid = Vec::new();
    for &a in &cfg.sweep_values {
        match axis2 {
            Some((name2, values2)) => {
                for &b in values2 {
                    grid.push(vec![(name1.clone(), a), (name2.clone(), b)]);
                }
            }
            None => grid.push(vec![(name1.clone(), a)]),
        }
    }
    Ok(grid)
}

fn sweep_point(cfg: &ExperimentConfig) -> CliResult<SweepRow> {
    cfg.validate().map_err(CliError::Config)?;
    let problem = cfg.build_problem().map_err(CliError::Config)?;
    let spec = cfg.trajectory_spec().map_err(CliError::Config)?;
    match mean_trajectory(problem.as_ref(), &spec, cfg.n_seeds, cfg.base_seed) {
        Ok(curve) => {
            let last = curve.len() - 1;
            let series = if curve.has_target() {
                &curve.mean_dist_sq
            } else {
                &curve.mean_loss
            };
            let slope = fit_rate(series, default_window(cfg.steps))
                .ok()
                .map(|f| f.slope);
            Ok(SweepRow {
                values: Vec::new(),
                final_mean_dist_sq: curve.has_target().then(|| curve.mean_dist_sq[last]),
                final_mean_loss: Some(curve.mean_loss[last]),
                slope,
                diverged: false,
            })
        }
        Err(Error::Diverged(_)) => Ok(SweepRow {
            values: Vec::new(),
            final_mean_dist_sq: None,
            final_mean_loss: None,
            slope: None,
            diverged: true,
        }),
        Err(e) => Err(CliError::Run(e)),
    }
}

/// `<param>[,<param2>],final_mean_dist_sq,final_mean_loss,slope,diverged`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    if let Some(first) = rows.first() {
        for (name, _) in &first.values {
            out.push_str(name);
            out.push(',');
        }
    }
    out.push_str("final_mean_dist_sq,final_mean_loss,slope,diverged\n");
    for r in rows {
        for (_, v) in &r.values {
            write!(out, "{v},").expect("writing to a String cannot fail");
        }
        writeln!(
            out,
            "{},{},{},{}",
            fmt_opt(r.final_mean_dist_sq),
            fmt_opt(r.final_mean_loss),
            fmt_opt(r.slope),
            r.diverged
        )
        .expect("writing to a String cannot fail");
    }
    out
}

/// One summary row per grid point, in row-major order, written to `sweep.csv`.
/// Diverged points are flagged rather than failing the sweep.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> CliResult<Vec<SweepRow>> {
    let grid = sweep_grid(cfg)?;
    let mut points = Vec::with_capacity(grid.len());
    for values in grid {
        let mut point = cfg.clone();
        for (name, v) in &values {
            point.set_param(name, *v).map_err(CliError::Config)?;
        }
        points.push((values, point));
    }
    let rows = with_threads(cfg.parallel, || {
        points
            .iter()
            .map(|(values, point)| {
                sweep_point(point).map(|row| SweepRow {
                    values: values.clone(),
                    ..row
                })
            })
            .collect::<CliResult<Vec<_>>>()
    })??;
    let csv = sweep_csv(&rows);
    write_file(&cfg.output_dir.join("sweep.csv"), csv.as_bytes())?;
    Manifest::new(cfg, &[("sweep.csv", csv.as_bytes())]).write(&cfg.output_dir)?;
    Ok(rows)
}

/// The enabled verifier reports, in a fixed order.
pub fn verify_reports(cfg: &ExperimentConfig) -> CliResult<Vec<Report>> {
    if cfg.fixture_beta.is_some_and(|b| !(0.0..1.0).contains(&b)) {
        return Err(CliError::Config(Error::param(
            "fixture_beta",
            "must lie in [0, 1)",
        )));
    }
    with_threads(cfg.parallel, || {
        let mut reports = Vec::new();
        if cfg.verify_counterexamples {
            reports.push(counterexample_log_aiming());
            reports.push(counterexample_quadratic_not_aiming());
        }
        if cfg.verify_chung {
            let (_, r) = verify_chung_recursions(cfg.chung_horizon).map_err(CliError::Config)?;
            reports.push(r);
        }
        if cfg.verify_ratio_expansion {
            let r = verify_ratio_expansion(
                RatioParams::default(),
                cfg.ratio_n_mc,
                &RATIO_SCALES,
                cfg.base_seed,
            )
            .map_err(CliError::Config)?;
            reports.push(r.report);
        }
        if cfg.verify_estimator_stats {
            reports.push(estimator_catalog(&cfg.catalog_fixture()).map_err(CliError::Config)?);
        }
        Ok(reports)
    })?
}

fn finish_reports(
    cfg: &ExperimentConfig,
    reports: Vec<Report>,
    out: &mut dyn std::io::Write,
) -> CliResult<Vec<Report>> {
    for r in &reports {
        writeln!(out, "{r}").map_err(io_err(Path::new("<stdout>")))?;
    }
    let mut buf = Vec::new();
    write_checks_csv(&mut buf, &reports).map_err(CliError::Run)?;
    write_file(&cfg.output_dir.join("verify.csv"), &buf)?;
    let failing: Vec<String> = reports
        .iter()
        .flat_map(|r| r.failures().map(move |c| format!("{}: {c}", r.title)))
        .collect();
    if reports.iter().any(|r| !r.passed()) {
        let detail = if failing.is_empty() {
            "a report has no checks".to_string()
        } else {
            failing.join("; ")
        };
        return Err(CliError::Verify(detail));
    }
    Ok(reports)
}

/// Runs the enabled verifiers, prints each report, writes `verify.csv`,
/// and fails with the failing bounds if any check fails.
pub fn cmd_verify(cfg: &ExperimentConfig, out: &mut dyn std::io::Write) -> CliResult<Vec<Report>> {
    let reports = verify_reports(cfg)?;
    finish_reports(cfg, reports, out)
}

/// The two counterexample reports only.
pub fn cmd_counterexamples(
    cfg: &ExperimentConfig,
    out: &mut dyn std::io::Write,
) -> CliResult<Vec<Report>> {
    let reports = vec![
        counterexample_log_aiming(),
        counterexample_quadratic_not_aiming(),
    ];
    finish_reports(cfg, reports, out)
}
