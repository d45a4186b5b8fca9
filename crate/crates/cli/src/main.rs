use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use restspike::commands;
use restspike::output::OutDir;
use restspike::{CliError, RunConfig};

/// Slow-fast analysis of a conductance-based neuron model with rest-spike
/// bistability. Every command writes CSV files into the output directory.
#[derive(Parser)]
#[command(name = "restspike", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full-system trajectories (t, v, n, p) from each initial state.
    Simulate(Args),
    /// Critical manifold grid, fold curves, projections and folded singularities.
    Manifold(Args),
    /// Reduced phase portrait: equilibria, saddle manifolds, landmarks, singular orbits.
    Reduced(Args),
    /// Bistability verdict over a current sweep and the singular homoclinic current.
    Bistability(Args),
    /// Equilibrium branch, bifurcation events, cycle family and i_H(eps) estimates.
    Bifdiag(Args),
}

#[derive(clap::Args)]
struct Args {
    /// JSON configuration; defaults are used for absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Applied current.
    #[arg(long, allow_negative_numbers = true)]
    i: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    i_lo: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    i_hi: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("RESTSPIKE_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("RESTSPIKE_THREADS={value}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<OutDir, CliError> {
    init_threads()?;
    let (Command::Simulate(args)
    | Command::Manifold(args)
    | Command::Reduced(args)
    | Command::Bistability(args)
    | Command::Bifdiag(args)) = &cli.command;
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    let mut out = OutDir::create(&cfg.out)?;
    match &cli.command {
        Command::Simulate(_) | Command::Manifold(_) | Command::Reduced(_) => {
            let i = commands::resolve_current(&cfg, args.i)?;
            match cli.command {
                Command::Simulate(_) => commands::simulate(&cfg, i, &mut out),
                Command::Manifold(_) => commands::manifold(&cfg, i, &mut out),
                _ => commands::reduced(&cfg, i, &mut out),
            }
        }
        Command::Bistability(_) | Command::Bifdiag(_) => {
            let cfg = cfg.with_range(args.i_lo, args.i_hi, args.steps)?;
            match cli.command {
                Command::Bistability(_) => commands::bistability(&cfg, &mut out),
                _ => commands::bifdiag(&cfg, &mut out),
            }
        }
    }
    .map(|()| out)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            for path in out.written() {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
