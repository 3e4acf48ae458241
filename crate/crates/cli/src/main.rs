//! `csa`: converse bounds, load thresholds, spatially-coupled thresholds and
//! Monte Carlo sweeps for coded slotted ALOHA on the K-MPR channel.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Exit status for invalid input.
const EXIT_VALIDATION: u8 = 2;
/// Exit status when a numerical procedure fails to converge.
const EXIT_NUMERICAL: u8 = 3;

/// Environment variable overriding the worker-thread count.
pub const THREADS_ENV: &str = "CSA_THREADS";

#[derive(Debug, Parser)]
#[command(name = "csa", version, about = "Coded slotted ALOHA over K-MPR channels: bounds, thresholds, simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Converse bound 𝔾(R, K): a single rate (JSON) or a rate grid (CSV).
    Bound(BoundArgs),
    /// Density-evolution load threshold of an ensemble (JSON).
    Threshold(ThresholdArgs),
    /// Spatially-coupled threshold over several chain lengths (JSON).
    ScThreshold(ScThresholdArgs),
    /// Slot-position p-profiles of coupled density evolution (CSV).
    ScProfile(ScProfileArgs),
    /// Coupled thresholds next to the converse bound for d = 3, 4 and K = 1..3 (CSV).
    Table1(Table1Args),
    /// Monte Carlo packet-loss sweep over loads (CSV).
    Simulate(SimulateArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct BoundArgs {
    /// Rate R in (0, 1].
    #[arg(long, conflicts_with = "grid")]
    pub rate: Option<f64>,
    /// Number of rates on (0.005, 0.995] for curve output.
    #[arg(long)]
    pub grid: Option<usize>,
    /// MPR capabilities, comma separated.
    #[arg(long = "K", value_delimiter = ',', default_value = "1")]
    pub k: Vec<u32>,
    /// Root tolerance on x = G / (K R).
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ThresholdArgs {
    /// Ensemble JSON file: { "codes": [...], "probs": [...] }.
    #[arg(long)]
    pub ensemble: PathBuf,
    #[arg(long = "K", default_value_t = 1)]
    pub k: u32,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    /// Density-evolution iteration cap per probe.
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Deterministic,
    Randomized,
}

#[derive(Debug, Args, Serialize)]
pub struct CouplingArgs {
    /// Replicas per user (repetition code length).
    #[arg(long)]
    pub d: usize,
    #[arg(long = "K", default_value_t = 1)]
    pub k: u32,
    #[arg(long, value_enum, default_value_t = Window::Deterministic)]
    pub window: Window,
    /// Coupling width for randomized windows (defaults to d).
    #[arg(long)]
    pub w: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ScThresholdArgs {
    #[command(flatten)]
    pub coupling: CouplingArgs,
    /// Chain lengths, comma separated.
    #[arg(long = "L", value_delimiter = ',', default_value = "50,100,200,400")]
    pub lengths: Vec<usize>,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ScProfileArgs {
    #[command(flatten)]
    pub coupling: CouplingArgs,
    #[arg(long = "L", default_value_t = 100)]
    pub length: usize,
    /// Nominal load G.
    #[arg(long = "G")]
    pub load: f64,
    /// Keep one profile every this many iterations.
    #[arg(long, default_value_t = 10)]
    pub every: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct Table1Args {
    /// Chain length for the coupled thresholds.
    #[arg(long = "L", default_value_t = 400)]
    pub length: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// JSON config: { "ensemble", "K", "M", "loads", "trials", "seed" }.
    #[arg(long, conflicts_with_all = ["ensemble", "repetition"])]
    pub config: Option<PathBuf>,
    /// Ensemble JSON file.
    #[arg(long, conflicts_with = "repetition")]
    pub ensemble: Option<PathBuf>,
    /// Shortcut for the (d, 1) repetition ensemble.
    #[arg(long)]
    pub repetition: Option<usize>,
    #[arg(long = "K", default_value_t = 1)]
    pub k: u32,
    /// Slots per frame.
    #[arg(long = "M", default_value_t = 1000)]
    pub slots: usize,
    /// Loads G, comma separated.
    #[arg(long = "G", value_delimiter = ',')]
    pub loads: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Write the first frame of the first load, with its decoding, as JSON.
    #[arg(long)]
    pub dump_frame: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| anyhow::anyhow!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match &cli.command {
        Command::Bound(a) => commands::bound(a),
        Command::Threshold(a) => commands::threshold(a),
        Command::ScThreshold(a) => commands::sc_threshold(a),
        Command::ScProfile(a) => commands::sc_profile(a),
        Command::Table1(a) => commands::table1(a),
        Command::Simulate(a) => commands::simulate(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numerical = e
                .downcast_ref::<csa_core::Error>()
                .is_some_and(csa_core::Error::is_numerical);
            ExitCode::from(if numerical { EXIT_NUMERICAL } else { EXIT_VALIDATION })
        }
    }
}
