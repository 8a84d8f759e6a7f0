//! `gperc`: run one experiment from a JSON config.
//!
//! Exit status: 0 when every check passes, 1 when any check fails, 2 on a
//! configuration or runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use graphon_percolation_harness::{emit, run, ExperimentConfig, ExperimentKind, Format, HarnessError};

#[derive(Parser)]
#[command(name = "gperc", version, about = "Percolation experiments on graphon-limit graph sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean C1/n over a c-grid at p = c/λ_n.
    ThresholdScan(Args),
    /// N_k/n and N_>ω/n against branching-process oracles.
    Census(Args),
    /// Percentiles of C1/ln n or C2/ln n over an n-grid.
    LogScaling(Args),
    /// C2/n for reducible kernels.
    ReducibleDemo(Args),
    /// Fixed point, Monte Carlo and tree-sum cross-checks for a kernel battery.
    BranchingValidate(Args),
    /// Homomorphism-density deviations along a graph sequence.
    Convergence(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output file; the JSON report goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides base_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides reps.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

impl Command {
    fn split(self) -> (ExperimentKind, Args) {
        match self {
            Command::ThresholdScan(a) => (ExperimentKind::ThresholdScan, a),
            Command::Census(a) => (ExperimentKind::ComponentCensus, a),
            Command::LogScaling(a) => (ExperimentKind::LogScaling, a),
            Command::ReducibleDemo(a) => (ExperimentKind::ReducibleDemo, a),
            Command::BranchingValidate(a) => (ExperimentKind::BranchingValidation, a),
            Command::Convergence(a) => (ExperimentKind::Convergence, a),
        }
    }
}

fn execute(kind: ExperimentKind, args: Args) -> Result<bool, HarnessError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    match cfg.experiment {
        Some(k) if k != kind => {
            return Err(HarnessError::Config(format!(
                "config is for {}, not {}",
                k.name(),
                kind.name()
            )))
        }
        _ => cfg.experiment = Some(kind),
    }
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    if let Some(reps) = args.reps {
        cfg.reps = reps;
    }
    let report = run(&cfg)?;
    match args.out.or(cfg.output.clone()) {
        Some(path) => emit(&report, &path, args.format)?,
        None => print!("{}", report.to_json()),
    }
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    for check in &report.checks {
        eprintln!("{check}");
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (kind, args) = Cli::parse().command.split();
    match execute(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
