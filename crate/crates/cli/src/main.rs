//! `spikecore` command-line tool: encode inputs, simulate networks, run the
//! design-space search and estimate hardware resources.

mod commands;
mod encode;
mod error;
mod io;
mod project;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::{EncodeArgs, EstimateArgs, ExploreArgs, ManifestCheckArgs, SimulateArgs};
use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "spikecore", version, about = "Configurable spiking-core simulator and design-space explorer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Project file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Trained model, quantized weights or manifest, depending on the command.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Encoded event dataset.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Write the per-packet trace of each sample to this file.
    #[arg(long, global = true)]
    trace: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Convert CSV rows or grayscale images into an event dataset.
    Encode {
        /// CSV files (`label,p0,p1,...`) or images under a class-named directory.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        timesteps: Option<usize>,
        /// Stochastic encoding; requires --seed.
        #[arg(long)]
        bernoulli: bool,
        /// Integer box-filter factor for images.
        #[arg(long)]
        downscale: Option<u32>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a dataset through a quantized network or manifest.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Search the precision space and write the best configuration.
    Explore {
        #[command(flatten)]
        common: Common,
    },
    /// Resource estimates for a project's candidates or a single network.
    Estimate {
        #[command(flatten)]
        common: Common,
    },
    /// Validate a manifest and re-check its recorded accuracy.
    ManifestCheck {
        #[command(flatten)]
        common: Common,
    },
}

fn init_threads(n: usize) -> CliResult<()> {
    if n == 0 {
        return Err(CliError::config("--threads must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Encode { inputs, timesteps, bernoulli, downscale, common } => commands::encode(&EncodeArgs {
            config: common.config,
            inputs,
            timesteps,
            bernoulli,
            downscale,
            seed: common.seed,
            out: common.out,
        }),
        Command::Simulate { common } => {
            init_threads(common.threads)?;
            let text = commands::simulate(&SimulateArgs {
                config: common.config,
                model: common.model,
                dataset: common.dataset,
                trace: common.trace,
                threads: common.threads,
            })?;
            match common.out {
                Some(p) => io::write_bytes(&p, text.as_bytes()).map(|_| String::new()),
                None => Ok(text),
            }
        }
        Command::Explore { common } => {
            init_threads(common.threads)?;
            commands::run_explore(&ExploreArgs {
                config: common.config,
                model: common.model,
                dataset: common.dataset,
                seed: common.seed,
                threads: common.threads,
                out: common.out,
            })
        }
        Command::Estimate { common } => {
            let text = commands::estimate(&EstimateArgs { config: common.config, model: common.model })?;
            match common.out {
                Some(p) => io::write_bytes(&p, text.as_bytes()).map(|_| String::new()),
                None => Ok(text),
            }
        }
        Command::ManifestCheck { common } => {
            init_threads(common.threads)?;
            commands::manifest_check(&ManifestCheckArgs {
                model: common.model,
                dataset: common.dataset,
                threads: common.threads,
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
