use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use torrey_cli::commands;
use torrey_cli::config::{RunConfig, Truncation};
use torrey_core::Result;

/// Spectrum, branch points and Jordan structure of the Bloch-Torrey operator.
///
/// Settings come from `--config` and from `key=value` arguments after the
/// subcommand, which take precedence. Every run writes `config.txt`, the
/// canonical form of the effective settings, next to its outputs.
#[derive(Parser)]
#[command(name = "torrey", version)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Basis truncation, an integer or `auto`.
    #[arg(long, global = true)]
    truncation: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues along a sweep of real g (spectrum.csv, optional modes.csv).
    Spectrum(Settings),
    /// Branch-point search over a region (branch_points.jsonl, scan_summary.json).
    Scan(Settings),
    /// Refine branch points to resolution `target` (refined.jsonl).
    Refine(Settings),
    /// Jordan data and collapse diagnostics at branch points.
    Jordan(Settings),
    /// Eigenmodes at one g sampled in space (modes.csv).
    Modes(Settings),
    /// Evolution of the uniform magnetization (evolve.csv).
    Evolve(Settings),
    /// Critical gradient η D / (γ L³) from diffusion, gamma, length and eta.
    Gc(Settings),
    /// Sheet grid and loop monodromy of the sqrt or quartic model.
    Toy(Settings),
}

#[derive(clap::Args)]
struct Settings {
    /// Config overrides such as `g_max=50`.
    #[arg(value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn load(cli: &Cli, settings: &Settings) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::parse(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(t) = &cli.truncation {
        config.truncation = Some(Truncation::parse(t)?);
    }
    for pair in &settings.set {
        config.set_pair(pair)?;
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| torrey_core::Error::Validation(e.to_string()))?;
    }
    let (f, settings): (fn(RunConfig, &Path) -> Result<Vec<PathBuf>>, _) = match &cli.command {
        Command::Spectrum(s) => (commands::cmd_spectrum, s),
        Command::Scan(s) => (commands::cmd_scan, s),
        Command::Refine(s) => (commands::cmd_refine, s),
        Command::Jordan(s) => (commands::cmd_jordan, s),
        Command::Modes(s) => (commands::cmd_modes, s),
        Command::Evolve(s) => (commands::cmd_evolve, s),
        Command::Gc(s) => (commands::cmd_gc, s),
        Command::Toy(s) => (commands::cmd_toy, s),
    };
    f(load(cli, settings)?, &cli.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
