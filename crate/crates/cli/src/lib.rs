//! `solderlab`: command-line verification of solder-form puzzle files.

pub mod command;
pub mod commands;
pub mod report;

use std::path::{Path, PathBuf};

use clap::Parser;
use solderlab_core::specfile::{load_puzzle, PuzzleSpec, SpecError};
use thiserror::Error;

pub use command::{Command, CommandError, Context, Options, Registry};
pub use commands::default_registry;
pub use report::{CheckRecord, Report};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown command `{name}` (available: {available})")]
    UnknownCommand { name: String, available: String },
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Command(#[from] CommandError),
    #[error("cannot write report to {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Parser)]
#[command(name = "solderlab", version, about = "Verify solder-form puzzle files")]
pub struct Cli {
    /// check, classify, metric, embed, quotient, transport, palatini,
    /// yangmills, observable or report-all
    pub command: String,
    pub puzzle: PathBuf,
    /// Residual tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Number of sample points.
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    /// RK4 steps for transport tables.
    #[arg(long, default_value_t = 40)]
    pub steps: usize,
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Record wall time per check (makes reports nondeterministic).
    #[arg(long)]
    pub timing: bool,
}

impl Cli {
    pub fn options(&self) -> Options {
        Options {
            tol: self.tol,
            samples: self.samples,
            steps: self.steps,
            seed: self.seed,
            timing: self.timing,
        }
    }
}

/// Run `command` on an already loaded puzzle.
pub fn run_spec(
    registry: &Registry,
    command: &str,
    spec: &PuzzleSpec,
    options: &Options,
) -> Result<Report, CliError> {
    let cmd = registry
        .get(command)
        .ok_or_else(|| CliError::UnknownCommand {
            name: command.to_string(),
            available: registry.names().join(", "),
        })?;
    let points = spec
        .puzzle
        .chart()
        .seeded_samples(options.samples, options.seed);
    let ctx = Context {
        spec,
        options,
        points,
        registry,
    };
    let checks = commands::run_guarded(cmd, &ctx)?;
    let warnings = spec
        .metric_warning
        .map(|d| format!("fiber metric is not compatible with the connection (defect {d:.3e})"))
        .into_iter()
        .collect();
    Ok(Report::new(
        &spec.name,
        command,
        options.seed,
        options.samples,
        warnings,
        checks,
    ))
}

pub fn run_file(command: &str, path: &Path, options: &Options) -> Result<Report, CliError> {
    let registry = default_registry();
    if registry.get(command).is_none() {
        return Err(CliError::UnknownCommand {
            name: command.to_string(),
            available: registry.names().join(", "),
        });
    }
    let spec = load_puzzle(path)?;
    run_spec(&registry, command, &spec, options)
}

/// Full command-line behaviour; returns the exit code.
pub fn main_with(cli: &Cli) -> i32 {
    let report = match run_file(&cli.command, &cli.puzzle, &cli.options()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };
    let json = report.to_json();
    match &cli.report {
        Some(path) => {
            if let Err(source) = std::fs::write(path, json + "\n") {
                eprintln!(
                    "error: {}",
                    CliError::Write {
                        path: path.display().to_string(),
                        source
                    }
                );
                return EXIT_INPUT;
            }
            for c in &report.checks {
                let status = if c.pass { "PASS" } else { "FAIL" };
                let residual = c
                    .max_residual
                    .map(|r| format!("{r:.3e}"))
                    .unwrap_or_else(|| "-".into());
                println!("{status} {}/{} {residual}", c.command, c.check);
            }
        }
        None => println!("{json}"),
    }
    report.exit_code()
}
