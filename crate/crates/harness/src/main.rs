use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use diabatherm_harness::config::RunConfig;
use diabatherm_harness::emit;
use diabatherm_harness::error::Result;
use diabatherm_harness::replay::replay;
use diabatherm_harness::sweep::{resolve_jobs, run_sweep, Grid, JOBS_ENV};

/// Diabatic ramps of trapped-ion Ising chains and their effective temperatures.
#[derive(Parser)]
#[command(name = "simulate", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its result bundle.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config key, `key=value`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every point of a grid and write merged figure tables.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; 0 uses every core.
        #[arg(long, env = JOBS_ENV)]
        jobs: Option<usize>,
    },
    /// Parse and validate a config, then print it in canonical form.
    ValidateConfig {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Recompute a bundle's observables from its stored final state.
    Replay {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(config: Option<&PathBuf>, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, overrides, out } => {
            let cfg = load(config.as_ref(), &overrides)?;
            let bundle = emit::run_to_dir(&cfg, &out)?;
            println!("config_hash = {}", bundle.config_hash);
            for (k, v) in emit::provenance(&bundle) {
                log::info!("{k} = {v}");
            }
            println!("wrote {}", out.display());
        }
        Command::Sweep { config, overrides, grid, out, jobs } => {
            let cfg = load(config.as_ref(), &overrides)?;
            let grid = Grid::load(&grid)?;
            let report = run_sweep(&cfg, &grid, &out, resolve_jobs(jobs)?)?;
            println!(
                "{} points, {} failed; wrote {}",
                report.points.len(),
                report.failures(),
                out.display()
            );
        }
        Command::ValidateConfig { config, overrides } => {
            let cfg = load(config.as_ref(), &overrides)?;
            cfg.axial()?;
            print!("# config_hash = {}\n{}", cfg.hash(), cfg.canonical_text());
        }
        Command::Replay { bundle, out } => {
            let b = replay(&bundle, out.as_deref())?;
            println!("replayed {} (config_hash = {})", bundle.display(), b.config_hash);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
