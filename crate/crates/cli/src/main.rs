//! `netspc`: moment precomputation, closed-loop experiments and reports.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use netspc_core::sim::ControllerKind;
use netspc_core::ProtocolKind;

use commands::Overrides;
use error::CliError;

#[derive(Parser)]
#[command(name = "netspc", version, about = "Sparse stochastic predictive control over an erasure channel")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate (or load) the moment matrices for every grid cell.
    Moments {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the closed loop for every grid cell and controller.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long, default_value = "netspc-out")]
        out: PathBuf,
    },
    /// Build CSV tables from a run directory.
    Report { dir: PathBuf },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_parser = parse_protocol)]
    protocol: Option<ProtocolKind>,
    #[arg(long)]
    mu: Option<f64>,
    /// Comparison controller; repeatable.
    #[arg(long = "baseline", value_parser = parse_controller)]
    baselines: Vec<ControllerKind>,
    /// Seed of the plant-noise and channel streams.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "netspc-cache")]
    cache_dir: PathBuf,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            paths: self.paths,
            steps: self.steps,
            protocol: self.protocol,
            mu: self.mu,
            seed: self.seed,
            baselines: self.baselines.clone(),
        }
    }
}

fn parse_protocol(s: &str) -> Result<ProtocolKind, String> {
    s.parse()
}

fn parse_controller(s: &str) -> Result<ControllerKind, String> {
    s.parse().map_err(|e: netspc_core::Error| e.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    }
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Moments { config, common } => commands::cmd_moments(&config, &common.overrides(), &common.cache_dir, &mut stdout),
        Command::Run { config, common, out } => commands::cmd_run(&config, &common.overrides(), &common.cache_dir, &out, &mut stdout),
        Command::Report { dir } => commands::cmd_report(&dir, &mut stdout).map(|_| ()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage problems share the config exit code.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("netspc: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
