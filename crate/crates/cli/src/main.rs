//! Batch front end: read a JSON job description, run one command, write
//! report.json (plus trajectory.csv for flows) into the output directory.
//!
//! Exit codes: 0 success, 2 validation failure, 3 numerical failure
//! (tolerances unmet), 4 configuration error.

mod commands;
mod config;
mod report;

use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "imd",
    version,
    about = "Monodromy data and isomonodromic deformation flows for generic meromorphic connections"
)]
struct Cli {
    /// Command: validate | stokes | monodromy | orbit | schlesinger | jmu | check
    command: String,

    /// Path to the JSON job configuration.
    #[arg(long)]
    config: PathBuf,

    /// Output directory for report.json and trajectory.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Override the integrator tolerance.
    #[arg(long)]
    tol: Option<f64>,

    /// Override the random seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the number of flow checkpoints per path edge.
    #[arg(long)]
    checkpoints: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match config::load(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(4);
        }
    };
    if let Some(tol) = cli.tol {
        cfg.params.tol = tol;
    }
    if let Some(seed) = cli.seed {
        cfg.params.seed = seed;
    }
    if let Some(cp) = cli.checkpoints {
        cfg.params.checkpoints = cp;
    }
    if let Err(e) = cfg.params.validate() {
        eprintln!("config error: {e:#}");
        return ExitCode::from(4);
    }
    let command = cli.command.as_str();
    if let Some(in_file) = &cfg.command {
        if in_file != command {
            eprintln!("note: config names command '{in_file}', running '{command}'");
        }
    }
    match commands::run(command, &cfg, &cli.out) {
        Ok(code) => {
            println!("{command}: exit {code}");
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("{command} failed: {e:#}");
            ExitCode::from(4)
        }
    }
}
