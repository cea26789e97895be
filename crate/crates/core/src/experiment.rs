//! The experiment driver: builds chains for the configured policies, solves
//! them, sweeps constant policies, simulates and exports, writing CSV series
//! and a JSON manifest into an output directory.
//!
//! CSV layouts (version [`CSV_FORMAT_VERSION`]):
//!
//! | file | columns |
//! |------|---------|
//! | `series_<policy>.csv` | `step,deaths_ge,expected_m,l1_change` |
//! | `cdf_<policy>.csv` | `value,<compartment>...` (limiting CDFs) |
//! | `limits.csv` | `policy,states,transitions,limit_deaths_ge,iterations,converged,l1_delta` |
//! | `sweep.csv` | `m,c,states,transitions,limit_deaths_ge` |
//! | `mc_<policy>.csv` | `step,mean_s,...,mean_ra,q05_d,median_d,q95_d,deaths_ge,deaths_gt` |
//! | `build.csv` | `model,states,transitions` |

use std::collections::BTreeMap;
use std::io;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{ModelError, Result};
use crate::export::{default_labels, export_dtmc, export_mdp, write_atomic, write_space_table, ExportOptions};
use crate::model::{Parameters, StateVector};
use crate::montecarlo::{self, McConfig, McReport, RNG_NAME};
use crate::policy::{build_policy_dtmc, Dtmc, Policy, Rounding, Signal};
use crate::solver::{converge, evolve, expected_action, limit_distribution, marginal_cdf, query_probability, Distribution};
use crate::space::{build_reachable, StateIndex};

pub const CSV_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// A stage of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Build,
    Solve,
    Sweep,
    MonteCarlo,
    Export,
}

impl Phase {
    pub const ALL: [Phase; 5] = [
        Phase::Build,
        Phase::Solve,
        Phase::Sweep,
        Phase::MonteCarlo,
        Phase::Export,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Phase::Build => "build",
            Phase::Solve => "solve",
            Phase::Sweep => "sweep",
            Phase::MonteCarlo => "monte-carlo",
            Phase::Export => "export",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub states: usize,
    pub transitions: usize,
    /// Exact limit of `Pr{D >= θ N}`.
    pub limit_deaths_ge: f64,
    /// Iterations of the L1 power iteration.
    pub iterations: usize,
    pub converged: bool,
    pub l1_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: u32,
    pub c: u32,
    pub states: usize,
    pub transitions: usize,
    pub limit_deaths_ge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub policy: String,
    pub runs: usize,
    pub deaths_ge_final: f64,
    pub deaths_ge_ci95: (f64, f64),
    pub deaths_gt_final: f64,
    pub deaths_gt_ci95: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub model: String,
    pub states: usize,
    pub transitions: usize,
}

/// Everything needed to reproduce and locate the outputs of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub package: String,
    pub version: String,
    pub csv_format_version: u32,
    pub seed: u64,
    pub rng: String,
    pub phases: Vec<Phase>,
    pub config: ExperimentConfig,
    pub parameters: Parameters,
    /// Paths relative to the output directory.
    pub files: Vec<String>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    pub builds: Vec<BuildSummary>,
    pub policies: Vec<PolicySummary>,
    pub sweep: Vec<SweepRow>,
    pub montecarlo: Vec<McSummary>,
}

/// File-name fragment for a policy: `m2`, `aa`, `as_unrounded_t1`, ...
pub fn policy_slug(policy: &Policy) -> String {
    match policy {
        Policy::Constant { m, t: 0 } => format!("m{m}"),
        Policy::Constant { m, t } => format!("m{m}_t{t}"),
        Policy::Adaptive { config, t } => {
            let mut s = match config.signal {
                Signal::Asymptomatic => "aa".to_string(),
                Signal::Symptomatic => "as".to_string(),
            };
            if config.rounding == Rounding::Unrounded {
                s.push_str("_unrounded");
            }
            if *t > 0 {
                s.push_str(&format!("_t{t}"));
            }
            s
        }
    }
}

fn unique_slugs(policies: &[Policy]) -> Vec<String> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    policies
        .iter()
        .map(|p| {
            let base = policy_slug(p);
            let k = seen.entry(base.clone()).or_insert(0);
            *k += 1;
            if *k == 1 {
                base
            } else {
                format!("{base}_{k}")
            }
        })
        .collect()
}

/// `D >= θ N`, with a guard against the product landing a hair above an integer.
pub fn death_predicate(fraction: f64, n: u32) -> impl Fn(&StateVector) -> bool + Copy {
    let threshold = fraction * n as f64 - 1e-9;
    move |v: &StateVector| v.d as f64 >= threshold
}

fn write_csv(out: &Path, name: &str, header: &[&str], rows: &[Vec<String>], files: &mut Vec<String>) -> Result<()> {
    write_atomic(&out.join(name), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(header).map_err(io::Error::other)?;
        for row in rows {
            csv.write_record(row).map_err(io::Error::other)?;
        }
        csv.flush()
    })?;
    files.push(name.to_string());
    Ok(())
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T, files: &mut Vec<String>) -> Result<()> {
    write_atomic(&out.join(name), |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(io::Error::other)?;
        io::Write::write_all(w, b"\n")
    })?;
    files.push(name.to_string());
    Ok(())
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    params: Parameters,
    mixture: Vec<(StateVector, f64)>,
    support: Vec<StateVector>,
}

impl Context<'_> {
    fn chain(&self, policy: &Policy, params: &Parameters) -> Result<(Dtmc, Distribution)> {
        let dtmc = build_policy_dtmc(&self.support, policy, params, self.cfg.kind)?;
        let dist = Distribution::from_weights(dtmc.space(), &self.mixture)?;
        Ok((dtmc, dist))
    }

    fn initial_indices(&self, dtmc: &Dtmc) -> Result<Vec<StateIndex>> {
        self.support.iter().map(|v| dtmc.space().rank(v)).collect()
    }
}

/// Runs the requested phases and writes their outputs plus `manifest.json`
/// into `out`. Phases whose configuration section is absent are skipped.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, phases: &[Phase]) -> Result<Manifest> {
    cfg.validate()?;
    let params = cfg.params();
    let mixture = cfg.initial_mixture()?;
    let mut support: Vec<StateVector> = mixture.iter().map(|e| e.0).collect();
    support.sort_unstable();
    support.dedup();
    let ctx = Context {
        cfg,
        params,
        mixture,
        support,
    };
    let mut phases = phases.to_vec();
    phases.sort_unstable();
    phases.dedup();
    std::fs::create_dir_all(out).map_err(|e| ModelError::io(out, e))?;

    let mut manifest = Manifest {
        package: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        csv_format_version: CSV_FORMAT_VERSION,
        seed: cfg.seed,
        rng: RNG_NAME.to_string(),
        phases: phases.clone(),
        config: cfg.clone(),
        parameters: params,
        files: Vec::new(),
        timings: BTreeMap::new(),
        builds: Vec::new(),
        policies: Vec::new(),
        sweep: Vec::new(),
        montecarlo: Vec::new(),
    };
    for phase in phases {
        let start = Instant::now();
        match phase {
            Phase::Build => build_phase(&ctx, out, &mut manifest)?,
            Phase::Solve => solve_phase(&ctx, out, &mut manifest)?,
            Phase::Sweep => sweep_phase(&ctx, out, &mut manifest)?,
            Phase::MonteCarlo => mc_phase(&ctx, out, &mut manifest)?,
            Phase::Export => export_phase(&ctx, out, &mut manifest)?,
        }
        manifest
            .timings
            .insert(phase.name().to_string(), start.elapsed().as_secs_f64());
    }
    let mut files = std::mem::take(&mut manifest.files);
    files.push(MANIFEST_FILE.to_string());
    manifest.files = files;
    let mut scratch = Vec::new();
    write_json(out, MANIFEST_FILE, &manifest, &mut scratch)?;
    Ok(manifest)
}

fn build_phase(ctx: &Context, out: &Path, manifest: &mut Manifest) -> Result<()> {
    let mut rows = Vec::new();
    if !ctx.cfg.actions.is_empty() {
        let actions = ctx.cfg.action_set()?;
        let (space, table) = build_reachable(&ctx.support, &actions, &ctx.params, ctx.cfg.kind)?;
        write_space_table(out.join("table"), &space, &table, &ctx.params)?;
        for f in ["states.txt", "transitions.txt", "header.json"] {
            manifest.files.push(format!("table/{f}"));
        }
        manifest.builds.push(BuildSummary {
            model: "mdp".into(),
            states: space.len(),
            transitions: table.nnz(),
        });
    }
    for (policy, slug) in ctx.cfg.policies.iter().zip(unique_slugs(&ctx.cfg.policies)) {
        let dtmc = build_policy_dtmc(&ctx.support, policy, &ctx.params, ctx.cfg.kind)?;
        manifest.builds.push(BuildSummary {
            model: slug,
            states: dtmc.num_states(),
            transitions: dtmc.nnz(),
        });
    }
    for b in &manifest.builds {
        rows.push(vec![b.model.clone(), b.states.to_string(), b.transitions.to_string()]);
    }
    write_csv(out, "build.csv", &["model", "states", "transitions"], &rows, &mut manifest.files)
}

fn solve_phase(ctx: &Context, out: &Path, manifest: &mut Manifest) -> Result<()> {
    let q = &ctx.cfg.queries;
    let deaths = death_predicate(q.death_fraction, ctx.params.n);
    let mut limit_rows = Vec::new();
    for (policy, slug) in ctx.cfg.policies.iter().zip(unique_slugs(&ctx.cfg.policies)) {
        let (dtmc, dist0) = ctx.chain(policy, &ctx.params)?;
        let space = dtmc.space();

        let mut rows = Vec::with_capacity(q.steps + 1);
        let mut previous: Option<Distribution> = None;
        let mut failure = None;
        evolve(&dtmc, &dist0, q.steps, |k, dist| {
            let em = match expected_action(space, dist, policy) {
                Ok(x) => x,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            };
            let change = previous.as_ref().map_or(0.0, |p| p.l1_distance(dist));
            rows.push(vec![
                k.to_string(),
                query_probability(space, dist, deaths).to_string(),
                em.to_string(),
                change.to_string(),
            ]);
            previous = Some(dist.clone());
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        write_csv(
            out,
            &format!("series_{slug}.csv"),
            &["step", "deaths_ge", "expected_m", "l1_change"],
            &rows,
            &mut manifest.files,
        )?;

        let limit = limit_distribution(&dtmc, &dist0)?;
        let cdfs: Vec<Vec<f64>> = q.cdf.iter().map(|&c| marginal_cdf(space, &limit, c)).collect();
        let mut header = vec!["value".to_string()];
        header.extend(q.cdf.iter().map(|c| c.name().to_lowercase()));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let cdf_rows: Vec<Vec<String>> = (0..=ctx.params.n as usize)
            .map(|x| {
                let mut row = vec![x.to_string()];
                row.extend(cdfs.iter().map(|c| c[x].to_string()));
                row
            })
            .collect();
        write_csv(out, &format!("cdf_{slug}.csv"), &header, &cdf_rows, &mut manifest.files)?;

        let conv = converge(&dtmc, &dist0, q.tolerance, q.max_iterations)?;
        let summary = PolicySummary {
            policy: slug.clone(),
            states: dtmc.num_states(),
            transitions: dtmc.nnz(),
            limit_deaths_ge: query_probability(space, &limit, deaths),
            iterations: conv.iterations,
            converged: conv.converged,
            l1_delta: conv.delta,
        };
        limit_rows.push(vec![
            slug,
            summary.states.to_string(),
            summary.transitions.to_string(),
            summary.limit_deaths_ge.to_string(),
            summary.iterations.to_string(),
            summary.converged.to_string(),
            summary.l1_delta.to_string(),
        ]);
        manifest.policies.push(summary);
    }
    write_csv(
        out,
        "limits.csv",
        &["policy", "states", "transitions", "limit_deaths_ge", "iterations", "converged", "l1_delta"],
        &limit_rows,
        &mut manifest.files,
    )
}

fn sweep_phase(ctx: &Context, out: &Path, manifest: &mut Manifest) -> Result<()> {
    let Some(sweep) = &ctx.cfg.sweep else {
        return Ok(());
    };
    let deaths = death_predicate(ctx.cfg.queries.death_fraction, ctx.params.n);
    let mut rows = Vec::new();
    for &c in &sweep.c {
        let params = ctx.params.with_capacity(c);
        for &m in &sweep.m {
            let (dtmc, dist0) = ctx.chain(&Policy::constant(m), &params)?;
            let limit = limit_distribution(&dtmc, &dist0)?;
            let row = SweepRow {
                m,
                c,
                states: dtmc.num_states(),
                transitions: dtmc.nnz(),
                limit_deaths_ge: query_probability(dtmc.space(), &limit, deaths),
            };
            rows.push(vec![
                m.to_string(),
                c.to_string(),
                row.states.to_string(),
                row.transitions.to_string(),
                row.limit_deaths_ge.to_string(),
            ]);
            manifest.sweep.push(row);
        }
    }
    write_csv(
        out,
        "sweep.csv",
        &["m", "c", "states", "transitions", "limit_deaths_ge"],
        &rows,
        &mut manifest.files,
    )
}

/// The simulation setup for one policy, scaled as configured.
pub fn mc_config(cfg: &ExperimentConfig, policy: &Policy) -> Result<Option<McConfig>> {
    let Some(spec) = &cfg.montecarlo else {
        return Ok(None);
    };
    let params = cfg.params();
    let base = McConfig {
        params,
        kind: cfg.kind,
        initial: cfg.initial_mixture()?,
        policy: policy.clone(),
        runs: spec.runs,
        depth: spec.depth,
        seed: cfg.seed,
        real_population: params.n as f64,
        death_fraction: cfg.queries.death_fraction,
    };
    let mut scaled = base.scaled(spec.scale);
    if let Some(real) = spec.real_population {
        scaled.real_population = real;
    }
    Ok(Some(scaled))
}

fn mc_rows(report: &McReport) -> Vec<Vec<String>> {
    report
        .steps
        .iter()
        .map(|s| {
            let mut row = vec![s.step.to_string()];
            row.extend(s.mean.iter().map(|x| x.to_string()));
            row.extend([s.q05[5], s.median[5], s.q95[5]].map(|x| x.to_string()));
            row.push(s.deaths_ge.to_string());
            row.push(s.deaths_gt.to_string());
            row
        })
        .collect()
}

fn mc_phase(ctx: &Context, out: &Path, manifest: &mut Manifest) -> Result<()> {
    if ctx.cfg.montecarlo.is_none() {
        return Ok(());
    }
    let header = [
        "step", "mean_s", "mean_a", "mean_i", "mean_r", "mean_o", "mean_d", "mean_q", "mean_ra",
        "q05_d", "median_d", "q95_d", "deaths_ge", "deaths_gt",
    ];
    for (policy, slug) in ctx.cfg.policies.iter().zip(unique_slugs(&ctx.cfg.policies)) {
        let config = mc_config(ctx.cfg, policy)?.expect("section present");
        let report = montecarlo::run(&config)?;
        write_csv(out, &format!("mc_{slug}.csv"), &header, &mc_rows(&report), &mut manifest.files)?;
        let summary = McSummary {
            policy: slug.clone(),
            runs: config.runs,
            deaths_ge_final: report.deaths_ge_final,
            deaths_ge_ci95: report.deaths_ge_ci95,
            deaths_gt_final: report.deaths_gt_final,
            deaths_gt_ci95: report.deaths_gt_ci95,
        };
        write_json(out, &format!("mc_{slug}.json"), &report, &mut manifest.files)?;
        manifest.montecarlo.push(summary);
    }
    Ok(())
}

fn export_phase(ctx: &Context, out: &Path, manifest: &mut Manifest) -> Result<()> {
    let Some(spec) = &ctx.cfg.export else {
        return Ok(());
    };
    let options = ExportOptions {
        prism_headers: spec.prism_headers,
    };
    let fraction = ctx.cfg.queries.death_fraction;
    let mut record = |stem: &str| {
        for ext in ["sta", "tra", "lab"] {
            manifest.files.push(format!("{stem}.{ext}"));
        }
    };
    for (policy, slug) in ctx.cfg.policies.iter().zip(unique_slugs(&ctx.cfg.policies)) {
        let stem = format!("{}_{slug}", spec.stem);
        let dtmc = build_policy_dtmc(&ctx.support, policy, &ctx.params, ctx.cfg.kind)?;
        let labels = default_labels(dtmc.space(), &ctx.initial_indices(&dtmc)?, fraction);
        export_dtmc(out.join(&stem), &dtmc, &labels, options)?;
        record(&stem);
    }
    if !ctx.cfg.actions.is_empty() {
        let stem = format!("{}_mdp", spec.stem);
        let (space, table) =
            build_reachable(&ctx.support, &ctx.cfg.action_set()?, &ctx.params, ctx.cfg.kind)?;
        let init: Vec<StateIndex> = ctx
            .support
            .iter()
            .map(|v| space.rank(v))
            .collect::<Result<_>>()?;
        export_mdp(out.join(&stem), &space, &table, &default_labels(&space, &init, fraction), options)?;
        record(&stem);
    }
    Ok(())
}

/// Reads `manifest.json` from an output directory.
pub fn read_manifest(out: &Path) -> Result<Manifest> {
    let path = out.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| ModelError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| ModelError::Config(format!("{}: {e}", path.display())))
}
