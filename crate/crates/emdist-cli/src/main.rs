use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use emdist::experiments::{
    load_scenario, run_convergence, selftest_report, selftest_table, swsh_check, write_csv, write_json, RunOptions,
};
use emdist::ExperimentError;

/// Empirical distance between quantum states and its classical limit.
#[derive(Parser, Debug)]
#[command(name = "emdist", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the built-in checks and print a pass/fail table.
    Selftest,
    /// Evaluate d and D for every line pair and spin of a scenario (no uncertainties).
    Distance {
        #[arg(long)]
        config: PathBuf,
    },
    /// Full convergence sweep with uncertainties, written as CSV (and optionally JSON).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Orthonormality and conjugation of the harmonics up to j = lmax.
    SwshCheck {
        #[arg(long)]
        lmax: u32,
        /// Largest |sigma| visited (default: lmax).
        #[arg(long)]
        sigma_max: Option<u32>,
    },
}

const OK: u8 = 0;
const VALIDATION: u8 = 1;
const NUMERICAL: u8 = 2;
const IO: u8 = 3;

fn code_of(e: &ExperimentError) -> u8 {
    match e {
        ExperimentError::Io { .. } => IO,
        ExperimentError::Parse(_) | ExperimentError::Validation(_) => VALIDATION,
        ExperimentError::Distance(_) => NUMERICAL,
    }
}

fn run(cli: Cli) -> Result<u8, ExperimentError> {
    match cli.command {
        Command::Selftest => {
            let checks = selftest_report();
            print!("{}", selftest_table(&checks));
            Ok(if checks.iter().all(|c| c.passed) { OK } else { NUMERICAL })
        }
        Command::Distance { config } => {
            let cfg = load_scenario(&config)?;
            let rep = run_convergence(&cfg, RunOptions { uncertainties: false })?;
            for r in &rep.rows {
                println!("{}", serde_json::to_string(r).expect("rows serialize"));
            }
            Ok(if rep.failed_rows() > 0 { NUMERICAL } else { OK })
        }
        Command::Sweep { config, out, json } => {
            let cfg = load_scenario(&config)?;
            let rep = run_convergence(&cfg, RunOptions::default())?;
            write_csv(&rep.rows, &out)?;
            if let Some(path) = json {
                write_json(&cfg, &rep, &path)?;
            }
            for s in &rep.summaries {
                eprintln!("pair ({},{}): {}", s.i, s.j, serde_json::to_string(s).expect("summaries serialize"));
            }
            Ok(if rep.failed_rows() > 0 { NUMERICAL } else { OK })
        }
        Command::SwshCheck { lmax, sigma_max } => {
            let c = swsh_check(lmax, sigma_max.unwrap_or(lmax));
            println!("{}", serde_json::to_string_pretty(&c).expect("report serializes"));
            Ok(if c.orthonormality < 1e-12 && c.conjugation < 1e-12 { OK } else { NUMERICAL })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(c) => ExitCode::from(c),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(code_of(&e))
        }
    }
}
