use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kropina::config::parse_schedule;
use kropina::{CliError, Command, Context, Overrides};

#[derive(Debug, Parser)]
#[command(name = "kropina", version, about = "Geodesics of Randers-Kropina metrics and Zermelo navigation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every random choice; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; documents go to stdout without it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Solver tolerance; overrides the config.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Comma-separated, strictly decreasing eps values.
    #[arg(long, global = true, value_parser = parse_schedule_arg)]
    eps_schedule: Option<Vec<f64>>,

    /// Largest winding number tried on periodic charts.
    #[arg(long, global = true)]
    k_max: Option<u32>,

    /// Grid resolution for the ball probe and convexity lattice.
    #[arg(long, global = true)]
    grid: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Cmd {
    /// Check the manifold assumptions.
    Describe,
    /// Geodesics from x0 to x1 via multi-start and eps continuation.
    Connect,
    /// Run the invariant suite.
    Verify,
    /// Steer x0 to x1 with an admissible control.
    Reach,
    /// Integrate one lifted geodesic.
    Geodesic,
    /// Time-optimal navigation under a wind.
    Zermelo,
    /// Compactness probe of forward and backward balls.
    Probe,
    /// Convexity certificate around a point.
    Convexity,
}

fn parse_schedule_arg(s: &str) -> Result<Vec<f64>, String> {
    parse_schedule(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::Describe => Command::Describe,
        Cmd::Connect => Command::Connect,
        Cmd::Verify => Command::Verify,
        Cmd::Reach => Command::Reach,
        Cmd::Geodesic => Command::Geodesic,
        Cmd::Zermelo => Command::Zermelo,
        Cmd::Probe => Command::Probe,
        Cmd::Convexity => Command::Convexity,
    };
    let overrides =
        Overrides { seed: cli.seed, tol: cli.tol, eps_schedule: cli.eps_schedule, k_max: cli.k_max, grid: cli.grid };
    let result = match &cli.config {
        Some(path) => Context::load(path, overrides, cli.out.as_deref()),
        // verify runs on the built-in catalog and needs no file
        None if command == Command::Verify => Context::from_source("", overrides, cli.out.as_deref()),
        None => Err(CliError::config("--config is required for this command")),
    }
    .and_then(|ctx| ctx.run(command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
