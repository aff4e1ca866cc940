use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ctap_cli::{execute, resolve_threads, Command, ExperimentConfig, THREADS_ENV};

#[derive(Parser)]
#[command(name = "sim", version, about = "CTAP atom-chip simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (overrides SIM_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Use the full-size chip and grid defaults and allow large grids.
    #[arg(long, global = true)]
    full_scale: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Three-mode coupled-amplitude model.
    Threemode,
    /// Chip potential and per-slice minima.
    Potential,
    /// Left-guide transverse ground state.
    Groundstate,
    /// Full real-time propagation.
    Evolve,
    /// Middle-current sweep for both pulse orderings.
    Sweep,
    /// Split-operator throughput per thread count.
    Bench,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Threemode => Command::ThreeMode,
            Cmd::Potential => Command::Potential,
            Cmd::Groundstate => Command::GroundState,
            Cmd::Evolve => Command::Evolve,
            Cmd::Sweep => Command::Sweep,
            Cmd::Bench => Command::Bench,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let command = Command::from(cli.command);

    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path, cli.full_scale),
        None => {
            let cfg = ExperimentConfig::defaults(cli.full_scale);
            cfg.validate().map(|_| cfg)
        }
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: stage `config` failed: {e}");
            return ExitCode::FAILURE;
        }
    };
    let threads = match resolve_threads(cli.threads, std::env::var(THREADS_ENV).ok().as_deref()) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: stage `threads` failed: {e}");
            return ExitCode::FAILURE;
        }
    };

    match execute(command, &cfg, &cli.out, threads) {
        Ok(m) => {
            println!("{} finished in {:.1} s; {} outputs in {}", m.command, m.wall_seconds, m.outputs.len(), cli.out.display());
            for (k, v) in &m.summary {
                println!("  {k} = {v}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
