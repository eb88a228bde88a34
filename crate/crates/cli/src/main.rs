//! `spinchaos`: runs one experiment described by a YAML config.
//!
//! Exit codes: 0 success, 1 parse or semantic error, 2 guard violation,
//! 3 numerical failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context as _, Result};
use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::{parse_config, ConfigError, MAX_QUAD_N};
use crate::output::Sink;

#[derive(Parser)]
#[command(name = "spinchaos", version, about = "Chaos experiments for coupled mixed even-spin glasses")]
struct Cli {
    /// YAML experiment config.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Overrides `quad_n`.
    #[arg(long = "quad-n", global = true, value_name = "INT")]
    quad_n: Option<usize>,
    /// Overrides `output`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Adds a generation timestamp to every artifact header.
    #[arg(long, global = true)]
    stamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Mixture values, replica-symmetric fixed points and structural conditions.
    MixtureInfo,
    /// Minimizes both functionals and exports triplets and profiles.
    Parisi,
    /// Fixed point u_f of the coupling map.
    FixedPoint,
    /// Band or manageable bound over a u grid.
    Bound,
    /// Exact enumeration: shell free energies and overlap histograms.
    Simulate,
    /// Ghirlanda–Guerra residuals.
    GgCheck,
    /// u_f, the band bound grid and the overlap histogram in one report.
    ChaosScan,
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| ConfigError(format!("THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let path = cli.config.ok_or_else(|| anyhow!(ConfigError("--config PATH is required".into())))?;
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = parse_config(&text).with_context(|| format!("in {}", path.display()))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(q) = cli.quad_n {
        if !(1..=MAX_QUAD_N).contains(&q) {
            return Err(ConfigError(format!("--quad-n must lie in 1..={MAX_QUAD_N}, got {q}")).into());
        }
        cfg.quad_n = q;
    }
    if let Some(out) = cli.out {
        cfg.output = out.to_string_lossy().into_owned();
    }
    let mut sink = Sink::new(&cfg.output, cfg.hash(), cfg.seed, cli.stamp)?;
    let ctx = Context::new(cfg)?;
    match cli.command {
        Command::MixtureInfo => commands::mixture_info(&ctx, &mut sink)?,
        Command::Parisi => commands::parisi(&ctx, &mut sink)?,
        Command::FixedPoint => commands::fixed_point(&ctx, &mut sink)?,
        Command::Bound => commands::bound(&ctx, &mut sink)?,
        Command::Simulate => commands::simulate(&ctx, &mut sink)?,
        Command::GgCheck => commands::gg_check(&ctx, &mut sink)?,
        Command::ChaosScan => commands::chaos_scan(&ctx, &mut sink)?,
    }
    for p in sink.written() {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use chaos_core::Error as E;
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Guard(_) => 2,
                E::NotPsd(_) | E::Unstable(_) | E::Numerical(_) => 3,
                E::Domain(_) | E::Invalid(_) => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
