//! Command-line front end: run scenarios, validate them, verify exported
//! ledgers and re-render stored reports.
//!
//! Exit codes: 0 on success, 1 on scenario validation failure, 2 on
//! ledger verification failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use witnessnet::consensus::Ledger;
use witnessnet::harness::report::{report_render, Format, RunReport};
use witnessnet::harness::scenario::{load_scenario, ScenarioError};
use witnessnet::harness::sim;

#[derive(Parser)]
#[command(
    name = "witnessnet",
    version,
    about = "Witness-presence protocol simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Text,
    Csv,
    Jsonlines,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Format {
        match f {
            OutputFormat::Text => Format::Text,
            OutputFormat::Csv => Format::Csv,
            OutputFormat::Jsonlines => Format::JsonLines,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and print (and optionally store) its report.
    Run {
        scenario: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for report.json, ledger.log and rendered outputs.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
    /// Validate a scenario file, printing every error found.
    Validate { scenario: PathBuf },
    /// Replay and re-verify an exported ledger.
    Verify { ledger: PathBuf },
    /// Re-render the report stored in a run directory.
    Report {
        run_dir: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            scenario,
            seed,
            out,
            format,
        } => cmd_run(scenario, seed, out, format),
        Command::Validate { scenario } => cmd_validate(scenario),
        Command::Verify { ledger } => cmd_verify(ledger),
        Command::Report { run_dir, format } => cmd_report(run_dir, format),
    }
}

fn load_or_report(path: &Path) -> Result<witnessnet::harness::LoadedScenario, ExitCode> {
    match load_scenario(path) {
        Ok(loaded) => Ok(loaded),
        Err(ScenarioError::Invalid(errors)) => {
            eprintln!("scenario {} failed validation:", path.display());
            for e in &errors {
                eprintln!("  - {e}");
            }
            Err(ExitCode::from(1))
        }
        Err(e) => {
            eprintln!("error: {e}");
            Err(ExitCode::from(1))
        }
    }
}

fn cmd_run(
    scenario_path: PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: OutputFormat,
) -> ExitCode {
    let loaded = match load_or_report(&scenario_path) {
        Ok(l) => l,
        Err(code) => return code,
    };
    let result = match sim::run(&loaded, seed) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("run failed: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(dir) = out {
        if let Err(e) = write_outputs(&dir, &result) {
            eprintln!("cannot write outputs to {}: {e}", dir.display());
            return ExitCode::from(1);
        }
    }
    let rendered = report_render(&result.report, format.into());
    print_bytes(&rendered);
    ExitCode::SUCCESS
}

fn write_outputs(dir: &Path, result: &sim::SimResult) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let report_json = serde_json::to_string_pretty(&result.report).expect("report serializes");
    std::fs::write(dir.join("report.json"), report_json)?;
    std::fs::write(dir.join("ledger.log"), &result.ledger_export)?;
    std::fs::write(
        dir.join("report.txt"),
        report_render(&result.report, Format::Text),
    )?;
    std::fs::write(
        dir.join("estimates.csv"),
        report_render(&result.report, Format::Csv),
    )?;
    std::fs::write(
        dir.join("report.jsonl"),
        report_render(&result.report, Format::JsonLines),
    )?;
    Ok(())
}

fn cmd_validate(scenario_path: PathBuf) -> ExitCode {
    match load_or_report(&scenario_path) {
        Ok(loaded) => {
            println!(
                "ok: {} participants, {} pois, {} validators, {} maps",
                loaded.scenario.participants.len(),
                loaded.scenario.pois.len(),
                loaded.scenario.validators.len(),
                loaded.scenario.maps.len()
            );
            ExitCode::SUCCESS
        }
        Err(code) => code,
    }
}

fn cmd_verify(ledger_path: PathBuf) -> ExitCode {
    let text = match std::fs::read_to_string(&ledger_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", ledger_path.display());
            return ExitCode::from(2);
        }
    };
    match Ledger::verify_export(&text) {
        Ok(height) => {
            println!("ok: chain verifies end-to-end at height {height}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("verification failed: {e}");
            ExitCode::from(2)
        }
    }
}

fn cmd_report(run_dir: PathBuf, format: OutputFormat) -> ExitCode {
    let path = run_dir.join("report.json");
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", path.display());
            return ExitCode::from(1);
        }
    };
    let report: RunReport = match serde_json::from_str(&text) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("malformed report: {e}");
            return ExitCode::from(1);
        }
    };
    print_bytes(&report_render(&report, format.into()));
    ExitCode::SUCCESS
}

fn print_bytes(bytes: &[u8]) {
    use std::io::Write;
    // A closed downstream pipe (e.g. `| head`) is not an error.
    if let Err(e) = std::io::stdout().write_all(bytes) {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            panic!("stdout: {e}");
        }
    }
}
