use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use neuron_landscape::cli::{run, Command, Invocation};

#[derive(Parser)]
#[command(name = "neuron-landscape", version, about = "Single-neuron learning experiments from JSON configs")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
    /// JSON config for the command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "NEURON_LANDSCAPE_THREADS")]
    threads: Option<usize>,
    /// Output directory (overrides the config's `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Write a dataset CSV and its metadata JSON.
    Generate,
    /// Run gradient descent; prints `final_loss=<value>`.
    Train,
    /// Loss-surface grid or a single stationarity verdict.
    Landscape,
    /// Check activation and marginal constants.
    Certify,
}

fn setup(args: &Args) -> anyhow::Result<Invocation> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("building the worker pool")?;
    }
    let config = args.config.clone().context("--config <path> is required")?;
    let command = match args.command {
        Cmd::Generate => Command::Generate,
        Cmd::Train => Command::Train,
        Cmd::Landscape => Command::Landscape,
        Cmd::Certify => Command::Certify,
    };
    Ok(Invocation { command, config, out: args.out.clone(), seed: args.seed })
}

fn main() -> ExitCode {
    let args = Args::parse();
    let inv = match setup(&args) {
        Ok(inv) => inv,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match run(&inv) {
        Ok(out) => {
            for line in &out.log {
                eprintln!("{line}");
            }
            for f in &out.files {
                eprintln!("wrote {}", f.display());
            }
            if let Some(line) = out.stdout {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
