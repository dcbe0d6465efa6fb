use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use sic_core::harness::{format_table, load_config, run_scenario, write_outputs, Seeds};
use sic_core::Algorithm;

#[derive(Parser)]
#[command(
    name = "sic-bench",
    version,
    about = "Digital self-interference cancellation workbench"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write traces, summary and log.
    Run {
        scenario: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Comma-separated algorithm ids, e.g. `wh-lms,aop-lms`.
        #[arg(long, value_delimiter = ',')]
        algos: Option<Vec<Algorithm>>,
        /// Derive all four seeds from this value.
        #[arg(long)]
        seed_override: Option<u64>,
        /// Multiply network training epochs by this factor.
        #[arg(long)]
        epoch_scale: Option<f64>,
    },
}

fn run(
    scenario: PathBuf,
    out: PathBuf,
    algos: Option<Vec<Algorithm>>,
    seed_override: Option<u64>,
    epoch_scale: Option<f64>,
) -> Result<()> {
    let mut cfg = load_config(&scenario).with_context(|| format!("loading {}", scenario.display()))?;
    if let Some(algos) = algos {
        cfg.select(&algos)?;
    }
    if let Some(base) = seed_override {
        cfg.seeds = Seeds::from_base(base);
    }
    if let Some(scale) = epoch_scale {
        cfg.training.epoch_scale = scale;
    }
    cfg.validate()?;
    let report = run_scenario(&cfg)?;
    let written = write_outputs(&report, &out)?;
    print!("{}", format_table(&report));
    for run in &report.runs {
        for w in &run.warnings {
            eprintln!("warning: {}: {w}", run.algorithm);
        }
        if let Some(f) = &run.fault {
            eprintln!("fault: {}: {f}", run.algorithm);
        }
    }
    println!("wrote {} files to {}", written.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            out,
            algos,
            seed_override,
            epoch_scale,
        } => run(scenario, out, algos, seed_override, epoch_scale),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
