//! rhino: compress NIDS flow logs into behavior-preserving summaries, map
//! them to MITRE ATT&CK tactic-technique pairs through an LLM pipeline, and
//! evaluate the mappings against ground truth.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{CmdResult, Failure};
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "rhino",
    version,
    about = "Compress NIDS flow logs and map them to MITRE ATT&CK tactics and techniques"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw logs and write compressed flow summaries (JSONL).
    Compress {
        /// Run configuration (TOML; JSON accepted).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output summaries file.
        #[arg(long)]
        out: PathBuf,
        /// Seed override for the stochastic stages.
        #[arg(long)]
        seed: Option<u64>,
        /// Input log files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Map summaries to ranked tactic-technique pairs (JSONL, resumable).
    Map {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Strategy: rhino, vanilla, cot, or tot.
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Summaries file produced by `compress`.
        summaries: PathBuf,
    },
    /// Score results against ground truth; writes <out>.json and <out>.md.
    Eval {
        /// Results file produced by `map`.
        #[arg(long)]
        results: PathBuf,
        /// Ground-truth JSON file.
        #[arg(long)]
        truth: PathBuf,
        /// Catalog CSV snapshot (defaults to the bundled one).
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Comma-separated top-K cutoffs.
        #[arg(long, default_value = "1,3,5")]
        k: String,
        /// Report path prefix.
        #[arg(long)]
        out: PathBuf,
    },
    /// Knowledge-base maintenance.
    Kb {
        #[command(subcommand)]
        command: KbCommand,
    },
}

#[derive(Subcommand)]
enum KbCommand {
    /// Refresh the CSV catalog snapshot from a STIX 2.1 bundle.
    Update {
        #[arg(long)]
        stix: PathBuf,
        /// Destination CSV (default: attack_catalog.csv).
        #[arg(long, default_value = "attack_catalog.csv")]
        out: PathBuf,
    },
}

fn parse_ks(raw: &str) -> Result<Vec<usize>, Failure> {
    let mut ks = Vec::new();
    for part in raw.split(',') {
        let k: usize = part
            .trim()
            .parse()
            .map_err(|_| Failure::from(anyhow::anyhow!("bad K value {part:?}")))?;
        if k == 0 {
            return Err(Failure::from(anyhow::anyhow!("K must be positive")));
        }
        ks.push(k);
    }
    ks.sort_unstable();
    ks.dedup();
    Ok(ks)
}

fn dispatch(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Compress {
            config,
            out,
            seed,
            inputs,
        } => {
            let cfg = RunConfig::load(config.as_deref()).map_err(Failure::from)?;
            let seed = seed.unwrap_or(cfg.seed);
            commands::compress::run(&cfg, &inputs, &out, seed)
        }
        Command::Map {
            config,
            strategy,
            out,
            seed,
            summaries,
        } => {
            let mut cfg = RunConfig::load(config.as_deref()).map_err(Failure::from)?;
            if strategy.is_some() {
                cfg.strategy = strategy;
            }
            let seed = seed.unwrap_or(cfg.seed);
            commands::map::run(&cfg, &summaries, &out, seed)
        }
        Command::Eval {
            results,
            truth,
            catalog,
            k,
            out,
        } => {
            let ks = parse_ks(&k)?;
            commands::eval::run(&results, &truth, catalog.as_deref(), &ks, &out)
        }
        Command::Kb { command } => match command {
            KbCommand::Update { stix, out } => commands::kb::update(&stix, &out),
        },
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(failure) = dispatch(cli) {
        eprintln!("error: {:#}", failure.error);
        std::process::exit(failure.code);
    }
}
