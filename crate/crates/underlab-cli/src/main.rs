//! `underlab`: command-line entry point for the underspecification laboratory.
//!
//! Subcommand tree: `sir` (simulate/fit/ensemble), `rf` (train/risk/
//! shift-curve/sensitivity-curve/theory-curve), `stats` (f/spearman/permute/
//! disagree/weat), `cluster demo`, and `reproduce` for manifest replay.
//! Every run writes its outputs plus a manifest recording the command, seed,
//! effective config, and output hashes.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numerical failure.

mod commands;
mod manifest;
mod output;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error("{0}")]
    Numerical(String),
    #[error("reproduction mismatch: {0}")]
    ReproduceMismatch(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(..) => 1,
            CliError::Numerical(_) | CliError::ReproduceMismatch(_) => 2,
        }
    }
}

macro_rules! numerical_from {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Numerical(e.to_string())
            }
        }
    )*};
}
numerical_from!(
    underlab_core::sir::SirError,
    underlab_core::rf::empirical::RfError,
    underlab_core::rf::theory::TheoryError,
    underlab_core::rf::experiments::ExperimentError,
    underlab_core::cluster::ClusterError,
    underlab_core::activation::ActivationError
);

impl From<underlab_core::stats::StatsError> for CliError {
    fn from(e: underlab_core::stats::StatsError) -> Self {
        match e {
            underlab_core::stats::StatsError::Csv(msg) => CliError::Usage(format!("csv: {msg}")),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "underlab",
    version,
    about = "Desk-scale experiments on underspecified model pipelines",
    arg_required_else_help = true
)]
pub struct Cli {
    /// Cap the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for output files (default: $UNDERLAB_OUT_DIR, then `.`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// SIR simulation, fitting, and initialization ensembles.
    #[command(subcommand)]
    Sir(commands::sir::SirCmd),
    /// Random-features training, Monte Carlo curves, and analytic curves.
    #[command(subcommand)]
    Rf(commands::rf::RfCmd),
    /// Ensemble stress-test statistics.
    #[command(subcommand)]
    Stats(commands::stats::StatsCmd),
    /// Correlated-feature-cluster demo.
    #[command(subcommand)]
    Cluster(commands::cluster::ClusterCmd),
    /// Re-run a recorded manifest and verify output hashes.
    Reproduce {
        /// Path to a `*.manifest.json` written by a previous run.
        manifest: PathBuf,
    },
}

/// What a command handler reports back for manifest writing.
pub struct RunOutcome {
    /// Manifest file name (written into the out dir).
    pub manifest_name: String,
    pub master_seed: Option<u64>,
    pub config: serde_json::Value,
    pub outputs: Vec<PathBuf>,
}

fn dispatch(cli: &Cli, out_dir: &std::path::Path) -> Result<RunOutcome, CliError> {
    match &cli.command {
        Command::Sir(cmd) => commands::sir::run(cmd, out_dir),
        Command::Rf(cmd) => commands::rf::run(cmd, out_dir),
        Command::Stats(cmd) => commands::stats::run(cmd, out_dir),
        Command::Cluster(cmd) => commands::cluster::run(cmd, out_dir),
        Command::Reproduce { .. } => unreachable!("handled in run_command"),
    }
}

/// Execute a full argv (without the binary name). Used by `main` and by
/// `reproduce` for in-process replay.
pub fn run_command(args: &[String]) -> Result<(), CliError> {
    let mut argv = vec!["underlab".to_string()];
    argv.extend(args.iter().cloned());
    let cli = Cli::try_parse_from(&argv).map_err(|e| CliError::Usage(e.to_string()))?;

    if let Some(threads) = cli.threads {
        // build_global fails if a pool already exists (e.g. reproduce after a
        // threaded run); the determinism guarantees make that harmless
        let _ = underlab_core::exec::limit_threads(threads);
    }
    let out_dir = output::resolve_out_dir(cli.out_dir.as_deref());
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Io(out_dir.display().to_string(), e))?;

    if let Command::Reproduce { manifest } = &cli.command {
        return commands::reproduce::run(manifest);
    }

    let start = Instant::now();
    let outcome = dispatch(&cli, &out_dir)?;
    let command_record = manifest::strip_out_dir(args);
    manifest::write_manifest(
        &out_dir,
        &outcome.manifest_name,
        command_record,
        outcome.master_seed,
        outcome.config,
        &outcome.outputs,
        start.elapsed().as_secs_f64(),
    )?;
    Ok(())
}

fn main() {
    // Keep BLAS single-threaded unless the caller explicitly configured it:
    // parallelism belongs to the replicate level, and fixed BLAS threading
    // keeps outputs byte-identical across --threads settings.
    if std::env::var_os("OPENBLAS_NUM_THREADS").is_none() {
        std::env::set_var("OPENBLAS_NUM_THREADS", "1");
    }
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() {
        // usage text, exit 1
        use clap::CommandFactory;
        let mut cmd = Cli::command();
        let _ = cmd.print_help();
        std::process::exit(1);
    }
    match run_command(&args) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("{err}");
            std::process::exit(err.exit_code());
        }
    }
}
