use std::path::PathBuf;
use std::process::ExitCode;

use bcos::cli::{
    cmd_counterexamples, cmd_run, cmd_sweep, cmd_verify, CliError, CliResult, ExperimentConfig,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "bcos",
    version,
    about = "Block-coordinate adaptive optimizer experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Number of seeds, overriding `n_seeds`.
    #[arg(long, global = true)]
    seeds: Option<usize>,
    /// Output directory, overriding `output_dir` and OUTPUT_DIR.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    parallel: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the mean trajectory and write trajectory.csv.
    Run,
    /// Sweep one or two hyperparameters and write sweep.csv.
    Sweep,
    /// Run the enabled verifiers.
    Verify,
    /// Check the two counterexamples.
    Counterexamples,
}

fn load(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(CliError::Config)?,
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = std::env::var_os("OUTPUT_DIR") {
        cfg.output_dir = dir.into();
    }
    if let Some(dir) = &cli.out {
        cfg.output_dir = dir.clone();
    }
    if let Some(n) = cli.seeds {
        cfg.n_seeds = n;
    }
    if let Some(n) = cli.parallel {
        cfg.parallel = n;
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let cfg = load(cli)?;
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Run => {
            let out = cmd_run(&cfg)?;
            println!(
                "wrote {} ({} rows)",
                out.trajectory_path.display(),
                out.curve.len()
            );
            println!("content hash {}", out.manifest.content_hash);
        }
        Command::Sweep => {
            let rows = cmd_sweep(&cfg)?;
            println!(
                "wrote {} ({} rows)",
                cfg.output_dir.join("sweep.csv").display(),
                rows.len()
            );
        }
        Command::Verify => {
            cmd_verify(&cfg, &mut stdout)?;
        }
        Command::Counterexamples => {
            cmd_counterexamples(&cfg, &mut stdout)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
