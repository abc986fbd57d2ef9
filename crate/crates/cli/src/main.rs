use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rsrp_cli::{cmd_bench, cmd_estimate, cmd_export, format_table, BenchOptions, CliError, EstimateOptions, ExportOptions};
use rsrp_core::experiment::Protocol;

#[derive(Parser)]
#[command(name = "rsrp", version, about = "Gyro-aided rolling-shutter relative pose")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the relative pose of a pair dataset and print it as JSON.
    Estimate {
        dataset: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        threshold: f64,
        #[arg(long, default_value_t = 200)]
        iterations: usize,
        /// Stop after the rolling-shutter RANSAC.
        #[arg(long)]
        no_refine: bool,
    },
    /// Run synthetic sweeps and write one CSV per protocol.
    Bench {
        /// angular, angular-linear, gyro-noise, camera-noise, planar or all.
        #[arg(long, default_value = "all")]
        protocol: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        threshold: f64,
        #[arg(long, default_value_t = 200)]
        iterations: usize,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Write a synthetic pair dataset with its ground truth.
    ExportSynthetic {
        #[arg(long, default_value = "angular")]
        protocol: String,
        #[arg(long, default_value_t = 1)]
        level: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Add the level's pixel and gyro noise.
        #[arg(long)]
        noisy: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn protocols(name: &str) -> Result<Vec<Protocol>, CliError> {
    if name == "all" {
        return Ok(Protocol::ALL.to_vec());
    }
    name.parse::<Protocol>().map(|p| vec![p]).map_err(CliError::Usage)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Estimate { dataset, seed, threshold, iterations, no_refine } => {
            let opts = EstimateOptions { seed, threshold, iterations, refine: !no_refine };
            let report = cmd_estimate(&dataset, &opts)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Bench { protocol, trials, seed, threshold, iterations, out } => {
            let opts = BenchOptions { protocols: protocols(&protocol)?, trials, seed, threshold, iterations, out };
            let rows = cmd_bench(&opts)?;
            print!("{}", format_table(&rows));
        }
        Command::ExportSynthetic { protocol, level, seed, noisy, out } => {
            let protocol = protocol.parse::<Protocol>().map_err(CliError::Usage)?;
            let ds = cmd_export(&ExportOptions { protocol, level, seed, noisy }, &out)?;
            eprintln!("wrote {} correspondences to {}", ds.correspondences.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
