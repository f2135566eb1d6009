//! `gemc`: run, analyse and compare graphene ensemble Monte Carlo simulations.

mod analyze;
mod compare;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "gemc",
    version,
    about = "Pauli-consistent ensemble Monte Carlo for graphene"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation (or a sweep) and write run directories.
    Run(RunArgs),
    /// Window statistics, grid period, harmonic subtraction for a run.
    Analyze(AnalyzeArgs),
    /// Side-by-side steady-state table of several runs.
    Compare(CompareArgs),
    /// Runtime table over a sweep, without writing run directories.
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// key=value configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override one key, e.g. `ee_mode=off`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Sweep one key over comma-separated values, e.g.
    /// `target_particles=1e4,1e5`. Repeatable; axes form a cross product.
    #[arg(long = "sweep", value_name = "KEY=V1,V2,...")]
    sweeps: Vec<String>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Parent directory of the run directories.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    run_dir: PathBuf,
    /// Statistics window in ps.
    #[arg(long, default_value = "3:5")]
    window: String,
    /// Window for period extraction and harmonic fits, ps.
    #[arg(long, default_value = "2.5:5")]
    fit_window: String,
    /// Highest harmonic order to fit.
    #[arg(long, default_value_t = 3)]
    harmonics: usize,
    /// Output directory, `<run_dir>-analysis` by default.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(required = true, num_args = 1..)]
    run_dirs: Vec<PathBuf>,
    #[arg(long, default_value = "3:5")]
    window: String,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    config: ConfigArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run::cmd_run(&a.config, &a.out),
        Command::Analyze(a) => analyze::cmd_analyze(
            &a.run_dir,
            &a.window,
            &a.fit_window,
            a.harmonics,
            a.out.as_deref(),
        ),
        Command::Compare(a) => compare::cmd_compare(&a.run_dirs, &a.window),
        Command::Bench(a) => run::cmd_bench(&a.config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
