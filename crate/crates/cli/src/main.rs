//! `sairod`: build, solve, simulate and export epidemic chains from a TOML config.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use sairod::config::ExperimentConfig;
use sairod::experiment::{run_experiment, Manifest, Phase};
use sairod::export::roundtrip_check;
use sairod::{ErrorKind, ModelError};

#[derive(Debug, Parser)]
#[command(name = "sairod", version, about = "Exact Markov engine for a SAIROD epidemic with testing and hospital capacity")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output` in the config.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Convergence tolerance; overrides `queries.tolerance`.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the configured chains (and the decision process when actions are listed).
    Build,
    /// Transient series, limiting CDFs and limits for every policy.
    Solve,
    /// Solve every policy and sweep constant meeting counts against capacities.
    PolicyEval,
    /// Monte Carlo simulation of every policy.
    Mc {
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        depth: Option<usize>,
        /// Population scaling factor.
        #[arg(long)]
        scale: Option<u32>,
    },
    /// Explicit-state files for an external model checker.
    Export,
    /// Re-import an exported chain and check that it re-exports byte for byte.
    RoundtripCheck {
        /// File stem of the `.sta`/`.tra`/`.lab` triple.
        stem: PathBuf,
    },
    /// Every phase the config has a section for.
    Run,
}

fn load(cli: &Cli) -> Result<(ExperimentConfig, PathBuf)> {
    let Some(path) = &cli.config else {
        bail!(ModelError::Config("--config is required for this command".into()));
    };
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(tol) = cli.tol {
        cfg.queries.tolerance = tol;
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.clone());
    cfg.output = out.clone();
    Ok((cfg, out))
}

fn report(manifest: &Manifest, out: &Path) {
    for b in &manifest.builds {
        println!("built {:<12} {:>9} states {:>11} transitions", b.model, b.states, b.transitions);
    }
    for p in &manifest.policies {
        println!(
            "policy {:<12} limit Pr(D >= thr) = {:.6}  ({} states, {} iterations to L1 < tol{})",
            p.policy,
            p.limit_deaths_ge,
            p.states,
            p.iterations,
            if p.converged { "" } else { ", not converged" }
        );
    }
    for s in &manifest.sweep {
        println!("sweep M={} C={}  limit = {:.6}", s.m, s.c, s.limit_deaths_ge);
    }
    for m in &manifest.montecarlo {
        println!(
            "mc {:<12} {} runs  Pr(D >= thr) = {:.4} [{:.4}, {:.4}]  Pr(D > thr) = {:.4}",
            m.policy, m.runs, m.deaths_ge_final, m.deaths_ge_ci95.0, m.deaths_ge_ci95.1, m.deaths_gt_final
        );
    }
    println!("wrote {} files to {}", manifest.files.len(), out.display());
}

fn execute(cli: &Cli) -> Result<()> {
    let phases: Vec<Phase> = match &cli.command {
        Command::RoundtripCheck { stem } => {
            let scratch = match &cli.out {
                Some(out) => out.clone(),
                None => std::env::temp_dir().join(format!("sairod-roundtrip-{}", std::process::id())),
            };
            let rt = roundtrip_check(stem, &scratch)
                .with_context(|| format!("round trip of {}", stem.display()))?;
            if cli.out.is_none() {
                let _ = std::fs::remove_dir_all(&scratch);
            }
            let names = ["sta", "tra", "lab"];
            for (name, same) in names.iter().zip(rt.identical) {
                println!("{name}: {}", if same { "identical" } else { "DIFFERS" });
            }
            println!("{} states, {} transitions", rt.states, rt.transitions);
            if !rt.is_identical() {
                bail!(ModelError::RoundTripMismatch(format!(
                    "re-export of {} is not byte-identical",
                    stem.display()
                )));
            }
            return Ok(());
        }
        Command::Build => vec![Phase::Build],
        Command::Solve => vec![Phase::Solve],
        Command::PolicyEval => vec![Phase::Solve, Phase::Sweep],
        Command::Mc { .. } => vec![Phase::MonteCarlo],
        Command::Export => vec![Phase::Export],
        Command::Run => Phase::ALL.to_vec(),
    };
    let (mut cfg, out) = load(cli)?;
    match &cli.command {
        Command::Mc { runs, depth, scale } => {
            let Some(mc) = cfg.montecarlo.as_mut() else {
                bail!(ModelError::Config("the config has no [montecarlo] section".into()));
            };
            mc.runs = runs.unwrap_or(mc.runs);
            mc.depth = depth.unwrap_or(mc.depth);
            mc.scale = scale.unwrap_or(mc.scale);
        }
        Command::PolicyEval if cfg.sweep.is_none() && cfg.policies.is_empty() => {
            bail!(ModelError::Config("nothing to evaluate: no policies and no [sweep]".into()));
        }
        Command::Export if cfg.export.is_none() => {
            bail!(ModelError::Config("the config has no [export] section".into()));
        }
        _ => {}
    }
    let manifest = run_experiment(&cfg, &out, &phases)?;
    report(&manifest, &out);
    Ok(())
}

/// 1 for configuration errors, 2 for numeric or invariant failures, 3 for I/O.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<ModelError>()) {
        Some(e) => match e.kind() {
            ErrorKind::Config => 1,
            ErrorKind::Numeric => 2,
            ErrorKind::Io => 3,
        },
        None => 2,
    }
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
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
