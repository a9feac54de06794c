use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use stochvort::cli::{dispatch, Subcommand};
use stochvort::config::{parse_config, RunConfig};
use stochvort::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Simulate,
    KernelCheck,
    ConvolutionCheck,
    Picard,
    Malliavin,
    Density,
    AllChecks,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Simulate => Subcommand::Simulate,
            Command::KernelCheck => Subcommand::KernelCheck,
            Command::ConvolutionCheck => Subcommand::ConvolutionCheck,
            Command::Picard => Subcommand::Picard,
            Command::Malliavin => Subcommand::Malliavin,
            Command::Density => Subcommand::Density,
            Command::AllChecks => Subcommand::AllChecks,
        }
    }
}

/// Stochastic 2D vorticity simulator and verification suite.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Args {
    command: Command,
    /// JSON run config; keys may be overridden by SNS_<KEY> environment variables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn load(args: &Args, sub: Subcommand) -> Result<RunConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => parse_config(path)?,
        None if sub == Subcommand::AllChecks => stochvort::checks::determinism_config(),
        None => return Err(Error::Config(format!("{sub} requires --config"))),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate_for(sub.name())?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let sub = Subcommand::from(args.command);
    let cfg = match load(&args, sub) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match dispatch(sub, &cfg, args.config.as_deref(), &args.out, args.threads) {
        Ok(outcome) => {
            for r in &outcome.checks {
                println!("{}", r.line());
            }
            println!("{sub}: {} ({} files in {})", if outcome.pass { "pass" } else { "FAIL" }, outcome.files.len(), args.out.display());
            ExitCode::from(if outcome.pass { 0 } else { EXIT_FAIL })
        }
        Err(e @ (Error::Config(_) | Error::Constraint { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAIL)
        }
    }
}
