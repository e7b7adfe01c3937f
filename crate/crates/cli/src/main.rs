//! Scenario runner: parse a config, build the system, execute protocol
//! requests with optional oracle cross-checks, and emit results.

mod config;
mod output;
mod runner;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(
    name = "gaugeloop",
    about = "Exact simulator and gate-schedule compiler for finite-group lattice gauge theories"
)]
struct Args {
    /// Scenario config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Overrides the seed of random state specs.
    #[arg(long)]
    seed: Option<u64>,
    /// Cross-check every protocol value against the direct oracle.
    #[arg(long)]
    check_oracle: bool,
    /// Agreement bound for cross-checked requests (overrides the config).
    #[arg(long)]
    tolerance: Option<f64>,
    /// Write the gate schedule of one request (to `<out>.<id>.schedule`
    /// next to --out, or stdout).
    #[arg(long, value_name = "ID")]
    export_schedule: Option<String>,
    /// Run independent requests concurrently.
    #[arg(long)]
    parallel: bool,
    /// Run the embedded invariant suite and exit.
    #[arg(long)]
    selftest: bool,
}

fn run(args: &Args) -> Result<bool> {
    let config_path = args
        .config
        .as_ref()
        .ok_or_else(|| anyhow!("--config <path> is required (or use --selftest)"))?;
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let mut cfg = config::parse(&text)
        .with_context(|| format!("parsing {}", config_path.display()))?;
    if let Some(tol) = args.tolerance {
        cfg.tolerance = tol;
    }
    let scenario = runner::build(&cfg, args.seed)?;

    if let Some(id) = &args.export_schedule {
        let schedule_text = runner::export_schedule_text(&scenario, id)?;
        match &args.out {
            Some(out) => {
                let path = out.with_extension(format!("{id}.schedule"));
                std::fs::write(&path, &schedule_text)
                    .with_context(|| format!("writing {}", path.display()))?;
                eprintln!("schedule for `{id}` written to {}", path.display());
            }
            None => print!("{schedule_text}"),
        }
    }

    let crosscheck = args.check_oracle || cfg.crosscheck;
    let records = runner::run_all(&scenario, args.check_oracle, args.parallel)?;
    let all_passed = records
        .iter()
        .all(|r| r.passed.unwrap_or(true));
    let out = output::RunOutput {
        group: scenario.layout.group().name().to_string(),
        lattice: scenario.layout.geometry().descriptor(),
        state: scenario.state_echo.clone(),
        seed: args.seed,
        tolerance: cfg.tolerance,
        crosscheck,
        results: records,
        all_passed,
        config_echo: cfg.raw.clone(),
    };
    let rendered = match args.format {
        Format::Json => output::to_json(&out)?,
        Format::Csv => output::to_csv(&out)?,
    };
    match &args.out {
        Some(path) => std::fs::write(path, rendered)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{rendered}"),
    }
    Ok(all_passed)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.selftest {
        return if selftest::run() {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(1)
        };
    }
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more cross-checked requests exceeded the tolerance");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
