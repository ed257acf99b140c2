//! `lwa-sim`: runs one experiment from a JSON config and writes its CSVs.
//!
//! Exit status: 0 success, 2 config or usage error, 3 numerical failure
//! (including flagged results), 4 I/O error. Every failure prints one JSON
//! line to stderr.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lwa_core::experiments::config::apply_set;
use lwa_core::experiments::{run, ExperimentConfig, ExperimentKind, RunError};
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(name = "lwa-sim", version, about = "Leaky-wave antenna downlink and localization experiments")]
struct Cli {
    /// beampattern, sumrate or music
    #[arg(required_unless_present = "print_default_config")]
    experiment: Option<String>,

    /// JSON config file
    #[arg(long, required_unless_present = "print_default_config")]
    config: Option<PathBuf>,

    /// Output directory, overriding `output_dir`
    #[arg(long)]
    out: Option<PathBuf>,

    /// Scenario seed, overriding `scenario.seed`
    #[arg(long)]
    seed: Option<u64>,

    /// Dotted-path override, e.g. `--set scenario.snr_db=5`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,

    /// Print a complete default config for an experiment and exit
    #[arg(long, value_name = "EXPERIMENT", conflicts_with_all = ["experiment", "config"])]
    print_default_config: Option<String>,
}

fn parse_kind(name: &str) -> Result<ExperimentKind, RunError> {
    ExperimentKind::parse(name).ok_or_else(|| {
        RunError::config(
            "unknown_experiment",
            format!("unknown experiment {name:?}; expected beampattern, sumrate or music"),
        )
    })
}

fn load(cli: &Cli, kind: ExperimentKind) -> Result<ExperimentConfig, RunError> {
    let path = cli.config.as_ref().expect("clap requires --config");
    let text = fs::read_to_string(path).map_err(|e| RunError::Io {
        path: path.clone(),
        source: e,
    })?;
    let mut doc: Value = serde_json::from_str(&text).map_err(|e| RunError::config("parse_error", e.to_string()))?;
    for s in &cli.sets {
        apply_set(&mut doc, s)?;
    }
    if let Some(seed) = cli.seed {
        apply_set(&mut doc, &format!("scenario.seed={seed}"))?;
    }
    if let Some(out) = &cli.out {
        let out = serde_json::to_string(&out.to_string_lossy()).expect("string serializes");
        apply_set(&mut doc, &format!("output_dir={out}"))?;
    }
    let config = ExperimentConfig::from_value(doc)?;
    if config.experiment != kind {
        return Err(RunError::config(
            "experiment_mismatch",
            format!("config is for {}, command line asks for {kind}", config.experiment),
        ));
    }
    Ok(config)
}

/// Runs the command; returns the numerical flags raised by the experiment.
fn execute(cli: &Cli) -> Result<Vec<String>, RunError> {
    if let Some(name) = &cli.print_default_config {
        let config = ExperimentConfig::default_for(parse_kind(name)?);
        println!("{}", serde_json::to_string_pretty(&config).expect("config serializes"));
        return Ok(vec![]);
    }
    let kind = parse_kind(cli.experiment.as_deref().expect("clap requires the experiment"))?;
    let config = load(cli, kind)?;
    let report = run(&config)?;
    let files: Vec<String> = report.files.iter().map(|p| p.display().to_string()).collect();
    let status = if report.flags.is_empty() { "ok" } else { "flagged" };
    println!(
        "{}",
        json!({ "status": status, "experiment": kind.name(), "files": files, "flags": report.flags })
    );
    Ok(report.flags)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let message: Vec<&str> = text
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(|l| l.trim().trim_start_matches("error: "))
                .filter(|l| !l.is_empty())
                .collect();
            eprintln!("{}", json!({ "error": "usage", "exit_code": 2, "message": message.join(" ") }));
            return ExitCode::from(2);
        }
    };
    match execute(&cli) {
        Ok(flags) if flags.is_empty() => ExitCode::SUCCESS,
        Ok(flags) => {
            eprintln!(
                "{}",
                json!({ "error": "numerical_flag", "exit_code": 3, "message": flags.join("; ") })
            );
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "error": e.code(), "exit_code": e.exit_code(), "message": e.to_string() })
            );
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
