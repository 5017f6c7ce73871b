use std::path::PathBuf;
use std::process::ExitCode;

use anitv_cli::compare::compare;
use anitv_cli::config::ConfigSource;
use anitv_cli::oracle::run_oracle;
use anitv_cli::run::run;
use anitv_cli::suite::run_suite;
use anitv_cli::{bundled, CliError};
use clap::{Parser, Subcommand};

/// Experiments for the anisotropic total variation flow. CONFIG is a TOML
/// file or `bundled:NAME`.
#[derive(Parser)]
#[command(name = "anitv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve an initial datum and write its artifacts.
    Run {
        config: String,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Rasterize an exact solution at the configured times.
    Oracle {
        config: String,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Compare a finished run with an oracle or another run.
    Compare {
        config: String,
        #[arg(long)]
        run_dir: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Accept runs produced by a different config.
        #[arg(long)]
        force: bool,
    },
    /// Execute a list of runs, oracles and comparisons.
    Suite {
        #[arg(default_value = "bundled:suite_ci")]
        config: String,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// List the bundled configs.
    List,
    /// Print a config (useful with `bundled:NAME`).
    Show { config: String },
}

fn execute(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Run { config, output_dir } => {
            let report = run(&ConfigSource::load(&config)?, output_dir.as_deref())?;
            println!(
                "{}: {} steps written to {}",
                report.name,
                report.diagnostics.len(),
                report.output_dir.display()
            );
            report.check_converged()?;
        }
        Command::Oracle { config, output_dir } => {
            let report = run_oracle(&ConfigSource::load(&config)?, output_dir.as_deref())?;
            println!("{} states written to {}", report.states.len(), report.output_dir.display());
        }
        Command::Compare {
            config,
            run_dir,
            output_dir,
            force,
        } => {
            let report = compare(&ConfigSource::load(&config)?, run_dir.as_deref(), output_dir.as_deref(), force)?;
            for r in &report.rows {
                println!(
                    "step {:>5}  t = {:<10} error = {:<12.6e} tolerance = {:<12.6e} {}",
                    r.step,
                    r.time,
                    r.error,
                    r.tolerance,
                    if r.passed() { "ok" } else { "FAIL" }
                );
            }
            report.check()?;
        }
        Command::Suite { config, output_dir } => {
            let report = run_suite(&ConfigSource::load(&config)?, output_dir.as_deref())?;
            print!("{}", report.manifest.render());
            return Ok(report.status);
        }
        Command::List => {
            for name in bundled::names() {
                println!("bundled:{name}");
            }
        }
        Command::Show { config } => print!("{}", ConfigSource::load(&config)?.text),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
