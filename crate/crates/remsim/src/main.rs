use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use remsim::measurement::Direction;
use remsim::pipeline::{self, ScenarioConfig};

/// Batch experiment pipeline: synthetic campaigns, map building, model
/// training and transmission-scheme simulation.
#[derive(Parser)]
#[command(name = "remsim", version)]
struct Cli {
    /// Scenario config (JSON).
    #[arg(long, global = true, default_value = "scenario.json")]
    config: PathBuf,
    /// Artifact directory; every step reads and writes here.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drive the campaign trips and write campaign.csv.
    Generate,
    /// Aggregate the campaign into a radio map.
    BuildRem {
        #[arg(long)]
        cell_width: f64,
    },
    /// Train the rate predictor and derivation model for one direction.
    Train {
        /// ul or dl.
        #[arg(long)]
        direction: String,
    },
    /// Run one transmission scheme over seeded trips.
    Simulate {
        /// Scheme name from the config.
        #[arg(long)]
        scheme: String,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Score cell widths against each other.
    Sweep {
        /// Comma-separated widths in meters, ascending.
        #[arg(long)]
        widths: String,
    },
    /// Compare the learned chain against the ground-truth field.
    Evaluate,
    /// Report simulated-seconds-per-wall-second per scheme.
    Bench,
}

fn run(cli: Cli) -> Result<String, Box<dyn std::error::Error>> {
    let config = ScenarioConfig::load(&cli.config)?;
    let out = cli.out.as_path();
    let line = match cli.command {
        Command::Generate => {
            let o = pipeline::generate(&config, out)?;
            format!("generate: {} samples -> {}", o.samples, o.path.display())
        }
        Command::BuildRem { cell_width } => {
            let o = pipeline::build_rem(&config, out, cell_width)?;
            format!(
                "build-rem: {} populated cells ({} samples rejected) -> {}",
                o.populated_cells,
                o.rejected_samples,
                o.path.display()
            )
        }
        Command::Train { direction } => {
            let direction = Direction::from_str(&direction)?;
            let o = pipeline::train(&config, out, direction)?;
            format!(
                "train {}: {} samples, cv rmse {:.3} +- {:.3} MBit/s -> {}, {}",
                o.direction,
                o.samples,
                o.cv_rmse_mean,
                o.cv_rmse_std,
                o.forest_path.display(),
                o.gpr_path.display()
            )
        }
        Command::Simulate { scheme, runs, seed } => {
            let o = pipeline::simulate(&config, out, &scheme, runs, seed)?;
            format!(
                "simulate {}: {} transmissions over {} run(s), mean rate {:.3} MBit/s -> {}",
                o.summary.scheme,
                o.summary.transmissions,
                o.summary.runs,
                o.summary.achieved_rate.mean,
                o.summary_path.display()
            )
        }
        Command::Sweep { widths } => {
            let widths = widths
                .split(',')
                .map(|w| w.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()?;
            let o = pipeline::run_sweep(&config, out, &widths)?;
            format!("sweep: {} widths -> {}", o.result.columns.len(), o.path.display())
        }
        Command::Evaluate => {
            let report = pipeline::evaluate(&config, out)?;
            let worst = report
                .schemes
                .iter()
                .map(|s| s.modeling_error.relative_mean)
                .fold(0.0, f64::max);
            format!(
                "evaluate: {} schemes x {} runs, worst relative mean error {:.4} -> {}",
                report.schemes.len(),
                report.runs,
                worst,
                pipeline::evaluation_path(out).display()
            )
        }
        Command::Bench => {
            let report = pipeline::bench(&config, out)?;
            let slowest = report
                .entries
                .iter()
                .map(|e| e.speedup)
                .fold(f64::INFINITY, f64::min);
            format!(
                "bench: {} schemes, slowest {:.0} simulated seconds per wall second -> {}",
                report.entries.len(),
                slowest,
                pipeline::bench_path(out).display()
            )
        }
    };
    Ok(line)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
