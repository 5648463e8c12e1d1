mod config;
mod store;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ScanConfig;

/// Batch driver for uniform-MPS ground-state sweeps, weak-measurement
/// trajectories, and criticality fits on the frustrated spin-1/2 chain.
#[derive(Parser)]
#[command(name = "dqcpwm", version, about)]
struct Cli {
    /// JSON sweep configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (records.csv, checkpoints/, fit reports).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (default: DQCPWM_WORKERS or the number of cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Reuse existing checkpoints and records (the default; kept as an
    /// explicit switch for scripts).
    #[arg(long, global = true, default_value_t = true)]
    resume: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve ground states over the (K, chi) grid, emit rows + checkpoints.
    Groundstate,
    /// Apply measurement trajectories to existing ground-state checkpoints.
    Measure,
    /// Locate pseudo-critical couplings and produce scaling-fit reports.
    Fit,
    /// Run the exact-diagonalization cross-check suite.
    Oracle,
}

fn main() -> ExitCode {
    dqcpwm_core::linalg::single_threaded_blas();
    let cli = Cli::parse();

    let workers = cli
        .workers
        .or_else(|| {
            std::env::var("DQCPWM_WORKERS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or_else(num_cpus);
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build_global()
    {
        eprintln!("warning: could not size worker pool: {e}");
    }

    match run(&cli) {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            for f in &failures {
                eprintln!("failed: {f}");
            }
            eprintln!("{} point(s) failed", failures.len());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<Vec<String>> {
    if matches!(cli.command, Command::Oracle) {
        let report = sweep::run_oracle()?;
        return Ok(report.failures);
    }

    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("--config is required for this subcommand"))?;
    let cfg = ScanConfig::load(config_path)?;
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs/default"));
    std::fs::create_dir_all(&out_dir)?;

    let report = match cli.command {
        Command::Groundstate => sweep::run_groundstate(&cfg, &out_dir)?,
        Command::Measure => sweep::run_measure(&cfg, &out_dir)?,
        Command::Fit => sweep::run_fit(&cfg, &out_dir)?,
        Command::Oracle => unreachable!(),
    };
    println!(
        "{} row(s) written to {}",
        report.rows_written,
        out_dir.display()
    );
    Ok(report.failures)
}

fn num_cpus() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}
