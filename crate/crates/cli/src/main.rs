//! `privdist` experiment runner.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "privdist",
    version,
    about = "Differentially private distributed QP experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML), or the name of a built-in case study.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the number of Monte-Carlo trials.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Suppress progress messages (warnings still go to stderr).
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Run the private distributed solver and report privacy and suboptimality.
    Run,
    /// Estimate local sensitivities and write certificates.
    Sensitivity,
    /// Sweep noise and iteration counts; check (ν, K) pairs.
    Tradeoff,
    /// Split the privacy budget among agents.
    Allocate,
    /// Closed-loop distributed MPC.
    MpcLoop,
}

/// Failure classes, mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Solver(String),
    Dominance(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Dominance(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid input: {m}"),
            Failure::Solver(m) => write!(f, "solver failure: {m}"),
            Failure::Dominance(m) => write!(f, "internal consistency failure: {m}"),
        }
    }
}

impl From<privdist_core::Error> for Failure {
    fn from(e: privdist_core::Error) -> Self {
        if e.is_solver_failure() {
            Failure::Solver(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

pub struct Log {
    quiet: bool,
}

impl Log {
    pub fn info(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    pub fn warn(&self, msg: impl AsRef<str>) {
        eprintln!("warning: {}", msg.as_ref());
    }
}

fn threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("PRIVDIST_THREADS") else {
        return Ok(());
    };
    let n: usize = v.parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        Failure::Validation(format!(
            "PRIVDIST_THREADS must be a positive integer, got `{v}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Validation(e.to_string()))
}

fn execute(cli: &Cli) -> Result<Vec<PathBuf>, Failure> {
    threads()?;
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => return Err(Failure::Validation("--config is required".into())),
    };
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let log = Log { quiet: cli.quiet };
    match cli.command {
        Command::Run => commands::run(&cfg, &out, &log),
        Command::Sensitivity => commands::sensitivity(&cfg, &out, &log),
        Command::Tradeoff => commands::tradeoff(&cfg, &out, &log),
        Command::Allocate => commands::allocate(&cfg, &out, &log),
        Command::MpcLoop => commands::mpc_loop(&cfg, &out, &log),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(files) => {
            if !cli.quiet {
                for f in files {
                    println!("wrote {}", f.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
