//! `pep`: sweep worst-case contraction factors over step-size grids, search
//! for the best (method, tau) pair, or validate a config file.
//!
//! Exit codes: 0 on success, 1 on config/usage errors, 2 when `--strict` is
//! set and any sample hit a solver failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use pep_cli::config::{parse_config, Experiment};
use pep_cli::emit;
use pep_cli::sweep::{find_best, sweep, Outcome};

#[derive(Parser)]
#[command(name = "pep", version, about = "Worst-case contraction-factor sweeps")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute rate curves for every (method, engine, tau) in the config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for CSV/SVG files.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (defaults to one per core).
        #[arg(long)]
        workers: Option<usize>,
        /// Comma-separated list among {csv, svg}.
        #[arg(long, default_value = "csv")]
        format: String,
        /// Exit with code 2 if any sample hits a solver failure.
        #[arg(long)]
        strict: bool,
    },
    /// Search for the smallest PEP rate over methods and tau.
    Best {
        #[arg(long)]
        config: PathBuf,
        /// Stop refining once the tau bracket is narrower than this.
        #[arg(long, default_value_t = 1e-6)]
        resolution: f64,
    },
    /// Parse the config and report what a sweep would run.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &Path) -> Result<Vec<Experiment>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text).with_context(|| format!("parsing {}", path.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into())
}

/// Runs a sweep; returns true if any sample failed (for `--strict`).
fn run_sweep(
    config: &Path,
    out: &Path,
    workers: Option<usize>,
    format: &str,
) -> Result<bool> {
    let experiments = load(config)?;
    let formats: Vec<&str> = format.split(',').map(str::trim).collect();
    let tol = pep_core::sdp::default_tol();
    let mut any_failure = false;
    for exp in &experiments {
        let curves = sweep(exp, tol, workers)?;
        for c in &curves {
            for s in &c.samples {
                match &s.outcome {
                    Outcome::Failed(msg) => {
                        any_failure = true;
                        eprintln!(
                            "warning: {} {} tau={}: {msg}",
                            c.method.name(),
                            c.label,
                            s.tau
                        );
                    }
                    Outcome::Skipped(msg) => {
                        eprintln!(
                            "note: {} {} tau={} skipped: {msg}",
                            c.method.name(),
                            c.label,
                            s.tau
                        );
                    }
                    Outcome::Rate(_) => {}
                }
            }
        }
        let log_x = exp.tau_grid.map(|g| g.log).unwrap_or(true);
        let paths =
            emit::write_outputs(out, &stem(config), &exp.name, &curves, &formats, log_x)?;
        for p in paths {
            println!("wrote {}", p.display());
        }
    }
    Ok(any_failure)
}

fn run_best(config: &Path, resolution: f64) -> Result<()> {
    let experiments = load(config)?;
    let tol = pep_core::sdp::default_tol();
    for exp in &experiments {
        let (interval, coarse_n) = match &exp.tau_grid {
            Some(g) => ((g.lo, g.hi), g.n.max(3)),
            None => ((1e-2, 1e2), 25),
        };
        let best = find_best(exp, interval, coarse_n, resolution, tol)?;
        let name = if exp.name.is_empty() { String::new() } else { format!("[{}] ", exp.name) };
        println!(
            "{name}best method={} tau={:.6} rate={:.9}",
            best.method.name(),
            best.tau,
            best.rate
        );
    }
    Ok(())
}

fn run_validate(config: &Path) -> Result<()> {
    let experiments = load(config)?;
    for exp in &experiments {
        let name = if exp.name.is_empty() { "(root)" } else { exp.name.as_str() };
        let grid = match &exp.tau_grid {
            Some(g) => format!(
                "{} points in [{}, {}] ({})",
                g.n,
                g.lo,
                g.hi,
                if g.log { "log" } else { "lin" }
            ),
            None => "per-method default grid".into(),
        };
        println!(
            "{name}: {:?}, {} methods, {} engines, {grid}",
            exp.structure,
            exp.methods.len(),
            exp.engines.len()
        );
        for m in &exp.methods {
            let range = match pep_core::model::admissible_step_range(*m, &exp.problem) {
                Ok(r) => format!("{r:?}"),
                Err(e) => format!("inadmissible: {e}"),
            };
            println!("  {}: {range}", m.name());
        }
    }
    println!("ok");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<u8> = match &cli.cmd {
        Cmd::Sweep { config, out, workers, format, strict } => {
            run_sweep(config, out, *workers, format)
                .map(|failed| if failed && *strict { 2 } else { 0 })
        }
        Cmd::Best { config, resolution } => run_best(config, *resolution).map(|()| 0),
        Cmd::Validate { config } => run_validate(config).map(|()| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
