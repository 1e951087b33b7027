//! `tubepath` experiment runner.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Loaded;
use run::{Failure, Out, Report, Setup};

#[derive(Parser)]
#[command(name = "tubepath", version, about = "Tube-confined stochastic path integral experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides mc.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides mc.samples.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Exit with code 4 when an acceptance check fails.
    #[arg(long, global = true)]
    strict: bool,
    /// Also write the first experiment.dump_count sampled paths.
    #[arg(long, global = true)]
    dump_paths: bool,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Kernel between the path endpoints, compared with an oracle.
    Propagator,
    /// Time-slicing error over the partition ladder.
    Convergence,
    /// Admissibility classification of the paths in experiment.probe_paths.
    Probe,
    /// Feynman–Kac expectation and its power series over a θ list.
    ThetaScan,
    /// Sampled paths with their weights.
    DumpPaths,
}

fn execute(cli: &Cli) -> Result<Report, Failure> {
    let loaded = match &cli.config {
        Some(p) => Loaded::read(p).map_err(|e| Failure::Config(e.to_string()))?,
        None => Loaded::defaults(),
    };
    let setup = Setup::build(&loaded, cli.seed, cli.samples)?;
    let out = Out::create(&cli.out)?;
    out.write("effective_config.toml", &setup.config.to_toml())?;
    let mut report = match cli.command {
        Command::Propagator => run::propagator(&setup, &out)?,
        Command::Convergence => run::convergence(&setup, &out)?,
        Command::Probe => run::probe(&setup, &out)?,
        Command::ThetaScan => run::theta_scan(&setup, &out)?,
        Command::DumpPaths => run::dump_paths(&setup, &out)?,
    };
    if cli.dump_paths && cli.command != Command::DumpPaths {
        report.summary.extend(run::dump_paths(&setup, &out)?.summary);
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(report) => {
            for line in &report.summary {
                println!("{line}");
            }
            for f in &report.failures {
                eprintln!("check failed: {f}");
            }
            if cli.strict && !report.failures.is_empty() {
                eprintln!("{}", Failure::Strict(format!("{} check(s) failed", report.failures.len())));
                return ExitCode::from(4);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("tubepath: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
