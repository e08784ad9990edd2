//! `pvi`: campaign driver for the privacy-preserving incentive mechanisms.
//!
//! Exit codes: 0 success, 1 property violation (a campaign check failed),
//! 2 usage error (bad flags, unreadable or malformed scenario file).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_bigint::BigInt;
use num_rational::BigRational;

use pvi_core::error::Error;
use pvi_core::harness::{
    run_equivalence, run_game, run_overhead, run_single, run_truthfulness, ScenarioSpec,
};
use pvi_core::protocol::JobModel;

#[derive(Parser)]
#[command(name = "pvi", about = "privacy-preserving incentive mechanism simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Oracle-equivalence campaign: protocol outcomes vs the plaintext rule.
    Equivalence(Common),
    /// Exhaustive bid-deviation search over generated instances.
    Truthfulness(Common),
    /// Verification-game table over a grid of audit probabilities.
    Game(Common),
    /// Overhead sweep with log-log scaling fits.
    Overhead(Common),
    /// Single scenario run; dumps board, counters, outcome, timing.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (key = value lines); defaults are used when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for output artifacts (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the instance/trial count.
    #[arg(long)]
    trials: Option<u64>,
    /// Model for default scenarios (h | het | sub); conflicts with --spec.
    #[arg(long, conflicts_with = "spec")]
    model: Option<String>,
}

impl Common {
    fn scenario(&self) -> Result<ScenarioSpec, Error> {
        let mut spec = match &self.spec {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Usage(format!("cannot read {}: {e}", path.display())))?;
                ScenarioSpec::parse(&text)?
            }
            None => {
                let model = match &self.model {
                    Some(tag) => JobModel::parse(tag)?,
                    None => JobModel::Homogeneous,
                };
                ScenarioSpec::defaults(model)
            }
        };
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        if let Some(trials) = self.trials {
            spec.instances = trials;
        }
        Ok(spec)
    }
}

fn write_artifact(dir: &Path, name: &str, content: &str) -> Result<(), Error> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Usage(format!("cannot create {}: {e}", dir.display())))?;
    std::fs::write(dir.join(name), content).map_err(Error::from)
}

fn emit(out: &Option<PathBuf>, report: &str) -> Result<(), Error> {
    print!("{report}");
    if let Some(dir) = out {
        write_artifact(dir, "report.txt", report)?;
    }
    Ok(())
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn dispatch(cli: Cli) -> Result<bool, Error> {
    match cli.cmd {
        Cmd::Equivalence(c) => {
            let spec = c.scenario()?;
            let report = run_equivalence(&spec)?;
            emit(&c.out, &report.render())?;
            Ok(report.passed())
        }
        Cmd::Truthfulness(c) => {
            let spec = c.scenario()?;
            let report = run_truthfulness(&spec)?;
            emit(&c.out, &report.render())?;
            Ok(report.passed())
        }
        Cmd::Game(c) => {
            let spec = c.scenario()?;
            // Grid brackets the deterrence boundary p_max/(F + p_max) = 1/10
            // of the fixed game policy (F = 900, p_max = gain = 100).
            let alphas = [ratio(1, 20), ratio(1, 10), ratio(1, 4), ratio(1, 2), ratio(1, 1)];
            let report = run_game(&alphas, spec.instances, spec.seed)?;
            emit(&c.out, &report.render())?;
            Ok(report.passed())
        }
        Cmd::Overhead(c) => {
            let spec = c.scenario()?;
            let report = run_overhead(&spec)?;
            emit(&c.out, &report.render())?;
            if let Some(dir) = &c.out {
                write_artifact(dir, "counters.csv", &report.csv)?;
            }
            Ok(report.passed())
        }
        Cmd::Run(c) => {
            let spec = c.scenario()?;
            let (_, artifacts) = run_single(&spec)?;
            print!("{}", artifacts.outcome);
            if let Some(dir) = &c.out {
                write_artifact(dir, "board.txt", &artifacts.board)?;
                write_artifact(dir, "counters.csv", &artifacts.counters)?;
                write_artifact(dir, "outcome.txt", &artifacts.outcome)?;
                write_artifact(dir, "timing.txt", &artifacts.timing)?;
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse(); // clap exits with code 2 on bad arguments
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) | Error::Parse(_) | Error::Io(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
