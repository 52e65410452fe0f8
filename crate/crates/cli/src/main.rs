use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

mod commands;
mod config;

use config::{Overrides, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Isospectrality, centralizer and fingerprint report.
    Brackets,
    /// Heat invariant `a2` by quasi Monte Carlo.
    A2,
    /// `a2` over a list of scales with the expansion fit.
    Sweep,
    /// Residual of the Laplacian intertwining for the configured pair.
    Intertwine,
    /// Oracle self-tests and frame-vs-oracle comparisons.
    Validate,
}

#[derive(Debug, Parser)]
#[command(name = "isophasal", version, about = "Isospectral bracket metrics: certification and heat invariants")]
struct Cli {
    command: Command,
    /// Run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Comma-separated scales, e.g. `1,2,4,8,16`.
    #[arg(long, value_delimiter = ',')]
    s_list: Option<Vec<f64>>,
    /// Directory for `<command>.jsonl` (and `sweep.csv`).
    #[arg(long)]
    out: Option<PathBuf>,
}

const EXIT_TOLERANCE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("ISOPHASAL_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                // only fails if a pool already exists, which cannot happen here
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: ISOPHASAL_THREADS must be a positive integer, got `{v}`");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    }
    let overrides = Overrides {
        nodes: cli.nodes,
        seed: cli.seed,
        replicates: cli.replicates,
        s_list: cli.s_list,
        out_dir: cli.out,
    };
    let config = match &cli.config {
        Some(path) => RunConfig::from_file(path, &overrides),
        None => RunConfig::from_text("<defaults>", "", &PathBuf::from("."), &overrides),
    };
    let config = match config {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match commands::run(cli.command, &config) {
        Ok(outcome) => {
            if let Err(e) = outcome.emit(cli.command, config.out_dir.as_deref()) {
                eprintln!("error: cannot write artifacts: {e}");
                return ExitCode::from(EXIT_TOLERANCE);
            }
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("one or more tolerance checks failed");
                ExitCode::from(EXIT_TOLERANCE)
            }
        }
        Err(e) if e.is_config() => {
            eprintln!("config error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_TOLERANCE)
        }
    }
}
