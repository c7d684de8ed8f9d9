//! Command-line front end for the interface-diversity latency toolkit.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{Overrides, Report, Scenario};
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "ifdiv",
    version,
    about = "Latency-reliability of multi-interface transmission strategies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the curve CSV here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Simulated epochs (total over replications).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: Option<u64>,
    /// Fraction step for the weighted-split grid search.
    #[arg(long, global = true)]
    pub grid_step: Option<f64>,
    #[arg(long, global = true)]
    pub x_max: Option<f64>,
    #[arg(long, global = true)]
    pub x_step: Option<f64>,
    /// Directory holding the trace files named in the scenario.
    #[arg(long, global = true)]
    pub trace_dir: Option<PathBuf>,
    /// Per-epoch outcome CSV (simulate, trace).
    #[arg(long, global = true)]
    pub outcomes: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Model curves for each interface and configured strategy.
    Eval,
    /// Grid-search weighted splits for each target.
    Optimize,
    /// Correlated-failure model: rates, steady state, curves.
    Ctmc,
    /// Monte-Carlo simulation against the model.
    Simulate,
    /// Replay recorded traces.
    Trace,
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            epochs: self.epochs,
            grid_step: self.grid_step,
            x_max: self.x_max,
            x_step: self.x_step,
            trace_dir: self.trace_dir.clone(),
        }
    }
}

/// Runs one subcommand and returns its report; outcome rows stream to
/// `--outcomes` as they are produced.
pub fn run(cli: &Cli) -> Result<Report, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::config("--config <FILE> is required"))?;
    let sc = Scenario::load(path, &cli.overrides())?;
    let mut outcomes: Option<BufWriter<File>> = match &cli.outcomes {
        Some(p) => Some(BufWriter::new(File::create(p).map_err(|e| {
            CliError::config(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => None,
    };
    let sink = outcomes.as_mut().map(|w| w as &mut dyn Write);
    match cli.command {
        Command::Eval | Command::Optimize | Command::Ctmc if sink.is_some() => Err(
            CliError::config("--outcomes applies to simulate and trace only"),
        ),
        Command::Eval => commands::cmd_eval(&sc),
        Command::Optimize => commands::cmd_optimize(&sc),
        Command::Ctmc => commands::cmd_ctmc(&sc),
        Command::Simulate => commands::cmd_simulate(&sc, sink),
        Command::Trace => commands::cmd_trace(&sc, sink),
    }
}

/// Full program: parse, run, write. Returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                error::ExitKind::Config as i32
            } else {
                0
            };
        }
    };
    match run(&cli).and_then(|r| emit(&cli, &r)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.exit_code()
        }
    }
}

fn emit(cli: &Cli, report: &Report) -> Result<(), CliError> {
    match &cli.out {
        Some(p) => {
            let f = File::create(p)
                .map_err(|e| CliError::config(format!("cannot create {}: {e}", p.display())))?;
            report.bundle.write_csv(BufWriter::new(f))?;
        }
        None => report.bundle.write_csv(std::io::stdout().lock())?,
    }
    eprint!("{}", report.summary);
    Ok(())
}
