use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use precs_cli::config::Format;
use precs_cli::{
    run_sample, run_simulate, run_sweep, run_verify, CliError, Context, ExperimentConfig, Overrides,
};

#[derive(Debug, Parser)]
#[command(
    name = "precs",
    version,
    about = "Coherent-state pre-measurement experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, overriding `outputs.directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed, overriding `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "PRECS_THREADS")]
    threads: Option<usize>,

    /// Comma-separated output formats: csv, json, ppm.
    #[arg(long, global = true, value_delimiter = ',')]
    format: Option<Vec<Format>>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// χ̄² snapshots, trajectories and decoherence intervals.
    Simulate,
    /// Cross-check against exact evolution; exit 1 on any failed bound.
    Verify,
    /// Seeded outcome sampling and Born statistics.
    Sample,
    /// Classical-limit parameter sweep.
    Sweep,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        #[cfg(feature = "parallel")]
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let mut config = ExperimentConfig::load(&path)?;
    Overrides {
        out: cli.out,
        seed: cli.seed,
        formats: cli.format.map(BTreeSet::from_iter),
    }
    .apply(&mut config);
    let ctx = Context::new(config)?;
    let dir = ctx.config.outputs.directory.display().to_string();
    match cli.command {
        Command::Simulate => {
            let s = run_simulate(&ctx)?;
            for snap in &s.snapshots {
                println!(
                    "t = {:.6}  modes = {}  integral = {:.6}",
                    snap.t, snap.modes, snap.integral
                );
            }
            match s.decoherence.tau_d {
                Some(t) => println!("tau_d = {t:.6}, intervals = {:?}", s.decoherence.intervals),
                None => println!(
                    "supports never separate at epsilon = {}",
                    s.decoherence.epsilon
                ),
            }
        }
        Command::Verify => {
            let r = run_verify(&ctx)?;
            for c in &r.checks {
                println!(
                    "{:<24} {:?}  measured {:.3e}  tolerance {:.1e}",
                    c.name, c.status, c.measured, c.tolerance
                );
            }
            println!("report written to {dir}/verify_report.json");
            r.ensure_pass()?;
        }
        Command::Sample => {
            let s = run_sample(&ctx)?;
            for row in &s.statistics.rows {
                println!(
                    "{}: {} / {}  frequency {:.4}  born {:.4}",
                    row.gamma, row.count, s.statistics.n_runs, row.frequency, row.born
                );
            }
            println!("chi-square p = {:.4}", s.statistics.p_value);
        }
        Command::Sweep => {
            let s = run_sweep(&ctx)?;
            for r in &s.rows {
                println!(
                    "{} = {}  tau_d = {:?}  resolution_ratio = {:.6}  max_born_error = {:.3e}",
                    s.parameter, r.value, r.tau_d, r.resolution_ratio, r.max_born_error
                );
            }
        }
    }
    println!("outputs in {dir}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("precs: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
