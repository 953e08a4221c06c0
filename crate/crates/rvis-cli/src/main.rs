//! `rvis` command-line tool: generate forests, build coded visibility maps,
//! plan sampling positions, and order drone routes.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

/// Validation failures exit with 2, internal failures with 1.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Internal(anyhow::Error),
}

impl From<rvis::Error> for CliError {
    fn from(e: rvis::Error) -> Self {
        match e {
            rvis::Error::Io(io) => CliError::Internal(io.into()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "rvis",
    version,
    about = "Bottom-up visibility maps of occluded ground regions and greedy aerial sampling plans"
)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = core count).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the procedural forest point cloud.
    Forest,
    /// Render bottom-up masks for the ROI and build the coded map.
    Rvmap,
    /// Plan sampling positions from a coded map.
    Plan {
        /// Coded map file (default: <out>/rvmap.rvc).
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Order a sampling set into a route or swarm batches.
    Route {
        /// Samples CSV (default: <out>/samples.csv).
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Number of drones; 1 produces a single route.
        #[arg(long, default_value_t = 1)]
        drones: usize,
        /// Route start position (defaults to the aperture center).
        #[arg(long, requires = "start_y")]
        start_x: Option<f64>,
        #[arg(long, requires = "start_x")]
        start_y: Option<f64>,
    },
    /// Run the reciprocity, roundtrip, and monotonicity property suites.
    Verify,
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| CliError::Internal(anyhow::anyhow!("thread pool: {e}")))?;
    }
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::Internal(e.into()))?;

    match cli.command {
        Command::Forest => commands::cmd_forest(&cfg).map(|_| true),
        Command::Rvmap => commands::cmd_rvmap(&cfg).map(|_| true),
        Command::Plan { map } => commands::cmd_plan(&cfg, map).map(|_| true),
        Command::Route {
            samples,
            drones,
            start_x,
            start_y,
        } => {
            let start = start_x.zip(start_y);
            commands::cmd_route(&cfg, samples, drones, start).map(|_| true)
        }
        Command::Verify => commands::cmd_verify(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1), // verification found failures
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(e)) => {
            eprintln!("internal error: {e}");
            ExitCode::from(1)
        }
    }
}
