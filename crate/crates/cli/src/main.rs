use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sheetsim::harness::{load_config, run_suite, Experiment, GateStatus, Overrides};
use sheetsim::Error;

const EXIT_GATE: u8 = 2;
const EXIT_USAGE: u8 = 3;
const EXIT_RESOURCE: u8 = 4;
const EXIT_OTHER: u8 = 1;

/// Monte Carlo experiments for kernel approximations of Wiener integrals
/// against the Brownian sheet.
#[derive(Parser, Debug)]
#[command(name = "sheetsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiments listed in the config.
    Simulate(Common),
    /// Empirical moments of `X_n(t)` against the Gaussian limit.
    VerifyMoments(Common),
    /// Kolmogorov-Smirnov and ECF tests of `X_n(t)`.
    Gof(Common),
    /// Random linear combinations of `X_n` at several corners.
    CramerWold(Common),
    /// Moment-ratio scan over the n grid.
    BoundScan(Common),
    /// Deterministic checks: lattice covariance limit and remainder decay.
    Appendix(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key=value` config file.
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores), overriding the config.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn split(self) -> (Common, Option<Vec<Experiment>>) {
        match self {
            Command::Simulate(c) => (c, None),
            Command::VerifyMoments(c) => (c, Some(vec![Experiment::Moments])),
            Command::Gof(c) => (c, Some(vec![Experiment::Gof])),
            Command::CramerWold(c) => (c, Some(vec![Experiment::CramerWold])),
            Command::BoundScan(c) => (c, Some(vec![Experiment::BoundScan])),
            Command::Appendix(c) => (
                c,
                Some(vec![Experiment::AppendixChecks, Experiment::RnDecay]),
            ),
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Usage { .. }
        | Error::Domain(_)
        | Error::DimensionMismatch { .. }
        | Error::Structural(_)
        | Error::Degenerate(_)
        | Error::Io(_) => EXIT_USAGE,
        Error::Resource { .. } => EXIT_RESOURCE,
        Error::Numeric(_) => EXIT_OTHER,
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    let (common, experiments) = cli.command.split();
    let config = load_config(
        &common.config,
        Overrides {
            seed: common.seed,
            workers: common.workers,
            out: common.out,
            experiments,
        },
    )?;
    let manifest = run_suite(&config)?;
    for o in &manifest.outcomes {
        println!(
            "{:<16} {:<7} {}",
            o.experiment.name(),
            o.status.to_string(),
            o.file.display()
        );
        for note in &o.notes {
            println!("    {note}");
        }
    }
    println!("manifest {}", manifest.path.display());
    let failed = manifest
        .outcomes
        .iter()
        .any(|o| o.status == GateStatus::Fail);
    Ok(if failed { EXIT_GATE } else { 0 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
