//! Seeded simulation of the chain by sequential sampling of its conditional stages.
//!
//! A step draws the same flows, in the same order, as the closed-form law:
//! infections, then the asymptomatic outcomes with testing, then
//! symptomatic, hospital and quarantine outcomes. The simulated chain is
//! therefore equal in distribution to the exact one.
//!
//! Runs use `ChaCha8Rng` seeded with the master seed, one stream per run
//! index, so each run is reproducible on its own and independent of the
//! schedule.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution as _, Hypergeometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::kernels::infection_probability_real;
use crate::model::{Action, ModelKind, Parameters, StateVector};
use crate::policy::Policy;
use crate::space::validate_for;

/// Algorithm recorded in reports.
pub const RNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64(seed), stream = run index";

fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u32, p: f64) -> u32 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n as u64, p)
        .expect("probability checked above")
        .sample(rng) as u32
}

/// Multinomial counts of `n` trials over categories with probabilities `probs`
/// (the remainder is the implicit last category), by sequential conditional binomials.
fn multinomial<R: Rng + ?Sized, const K: usize>(rng: &mut R, n: u32, probs: [f64; K]) -> [u32; K] {
    let mut out = [0u32; K];
    let mut left = n;
    let mut mass = 1.0;
    for (slot, &p) in out.iter_mut().zip(&probs) {
        if left == 0 || mass <= 0.0 {
            break;
        }
        let k = binomial(rng, left, (p / mass).min(1.0));
        *slot = k;
        left -= k;
        mass -= p;
    }
    out
}

/// Draws the next state for a real-valued meeting count and `t` tests.
pub fn sample_transition_with<R: Rng + ?Sized>(
    kind: ModelKind,
    v: &StateVector,
    meetings: f64,
    t: u32,
    params: &Parameters,
    rng: &mut R,
) -> StateVector {
    let p = params;
    let d1 = binomial(rng, v.s, infection_probability_real(v, meetings, p));

    // Asymptomatic subjects: d2 to I, d3 to Ra (R when untested), d9 to Q.
    let (mut d2, mut d9) = (0, 0);
    let mut untested_a = v.a;
    if kind == ModelKind::Full && t > 0 && v.a > 0 {
        let pool = v.test_pool();
        let tested_a = Hypergeometric::new(pool as u64, v.a as u64, t.min(pool) as u64)
            .expect("t is capped by the pool")
            .sample(rng) as u32;
        let positive = binomial(rng, tested_a, p.gamma);
        let to_i = binomial(rng, positive, p.delta);
        d2 += to_i;
        d9 = positive - to_i;
        untested_a -= positive;
    }
    let [to_i, d3] = multinomial(rng, untested_a, [p.delta, p.beta]);
    d2 += to_i;

    let [d4, wants_bed, d6] = multinomial(rng, v.i, [p.mu, p.psi, p.alpha]);
    let d5 = wants_bed.min(p.c - v.o);
    let [d7, d8] = multinomial(rng, v.o, [p.sigma, p.xi]);
    let [d10, d11] = multinomial(rng, v.q, [p.iota, p.upsilon]);

    let (ra_gain, r_gain) = match kind {
        ModelKind::Full => (d3, 0),
        ModelKind::Simplified => (0, d3),
    };
    StateVector {
        s: v.s - d1,
        a: v.a + d1 - d2 - d3 - d9,
        i: v.i + d2 + d10 - d4 - d5 - d6,
        r: v.r + d4 + d8 + d11 + r_gain,
        o: v.o + d5 - d7 - d8,
        d: v.d + d6 + d7,
        q: v.q + d9 - d10 - d11,
        ra: v.ra + ra_gain,
    }
}

/// Draws the next state under an integer action.
pub fn sample_transition<R: Rng + ?Sized>(
    kind: ModelKind,
    v: &StateVector,
    action: &Action,
    params: &Parameters,
    rng: &mut R,
) -> Result<StateVector> {
    validate_for(kind, v, params)?;
    action.check_admissible(v)?;
    if kind == ModelKind::Simplified && action.t != 0 {
        return Err(ModelError::InadmissibleAction {
            state: *v,
            action: *action,
            reason: "the untested model administers no tests".into(),
        });
    }
    Ok(sample_transition_with(
        kind,
        v,
        action.m as f64,
        action.t,
        params,
        rng,
    ))
}

/// Absolute and relative quantization error of representing `real_n`
/// subjects by `representatives`: `(N̂ / 2N, 1 / 2N)`.
pub fn quantization_error(real_n: f64, representatives: u32) -> Result<(f64, f64)> {
    if representatives == 0 {
        return Err(ModelError::InvalidParameter {
            name: "representatives",
            reason: "must be at least 1".into(),
        });
    }
    let two_n = 2.0 * representatives as f64;
    Ok((real_n / two_n, 1.0 / two_n))
}

/// Simulation setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub params: Parameters,
    pub kind: ModelKind,
    /// Initial mixture; each run draws its start state from it.
    pub initial: Vec<(StateVector, f64)>,
    pub policy: Policy,
    pub runs: usize,
    pub depth: usize,
    pub seed: u64,
    /// Real population represented by the `params.n` representatives.
    pub real_population: f64,
    /// Death threshold as a fraction of `N` for the benchmark probabilities.
    pub death_fraction: f64,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.policy.validate()?;
        if self.runs == 0 {
            return Err(ModelError::Config("runs must be at least 1".into()));
        }
        if self.initial.is_empty() {
            return Err(ModelError::Config("initial mixture is empty".into()));
        }
        let mass: f64 = self.initial.iter().map(|e| e.1).sum();
        if (mass - 1.0).abs() > 1e-9 || self.initial.iter().any(|e| !(e.1 >= 0.0)) {
            return Err(ModelError::Config(format!(
                "initial weights must be non-negative and sum to 1, got {mass}"
            )));
        }
        for (v, _) in &self.initial {
            validate_for(self.kind, v, &self.params)?;
        }
        if self.real_population < self.params.n as f64 {
            return Err(ModelError::Config(
                "real population must be at least the number of representatives".into(),
            ));
        }
        Ok(())
    }

    /// Scales population, capacity, initial counts and the policy's meeting
    /// counts by `factor`; thresholds are fractions and stay unchanged.
    pub fn scaled(&self, factor: u32) -> McConfig {
        let mut out = self.clone();
        out.params.n *= factor;
        out.params.c *= factor;
        out.initial = self
            .initial
            .iter()
            .map(|(v, w)| (StateVector::from_array(v.to_array().map(|x| x * factor)), *w))
            .collect();
        out.policy = match &self.policy {
            Policy::Constant { m, t } => Policy::Constant {
                m: m * factor,
                t: t * factor,
            },
            Policy::Adaptive { config, t } => {
                let mut config = *config;
                config.m_low *= factor;
                config.m_high *= factor;
                Policy::Adaptive {
                    config,
                    t: t * factor,
                }
            }
        };
        out.real_population = out.real_population.max(out.params.n as f64);
        out
    }
}

/// Per-step empirical statistics across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: usize,
    /// Mean count per compartment, `(S, A, I, R, O, D, Q, Ra)`.
    pub mean: [f64; 8],
    pub q05: [u32; 8],
    pub median: [u32; 8],
    pub q95: [u32; 8],
    /// Fraction of runs with `D >= fraction * N`.
    pub deaths_ge: f64,
    /// Fraction of runs with `D > fraction * N`.
    pub deaths_gt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub config: McConfig,
    pub rng: String,
    pub steps: Vec<StepStats>,
    /// Final-step `D >= fraction * N` frequency with its 95% Wilson interval.
    pub deaths_ge_final: f64,
    pub deaths_ge_ci95: (f64, f64),
    /// The same with strict inequality.
    pub deaths_gt_final: f64,
    pub deaths_gt_ci95: (f64, f64),
    pub quantization_abs: f64,
    pub quantization_rel: f64,
}

/// 95% Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z: f64 = 1.959_963_984_540_054;
    let n = n as f64;
    let phat = k as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (phat + z * z / (2.0 * n)) / denom;
    let half = z * ((phat * (1.0 - phat) + z * z / (4.0 * n)) / n).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn pick_initial<R: Rng + ?Sized>(initial: &[(StateVector, f64)], rng: &mut R) -> StateVector {
    if initial.len() == 1 {
        return initial[0].0;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (v, w) in initial {
        acc += w;
        if u < acc {
            return *v;
        }
    }
    initial.last().expect("validated non-empty").0
}

/// One trajectory of `depth` steps for run number `run`.
pub fn simulate_run(config: &McConfig, run: u64) -> Result<Vec<StateVector>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(run);
    let mut v = pick_initial(&config.initial, &mut rng);
    let mut path = Vec::with_capacity(config.depth + 1);
    path.push(v);
    for _ in 0..config.depth {
        let (m, t) = config.policy.choose(&v, config.params.n)?;
        v = sample_transition_with(config.kind, &v, m, t, &config.params, &mut rng);
        path.push(v);
    }
    Ok(path)
}

fn quantile(sorted: &[u32], q: f64) -> u32 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Runs all trajectories and aggregates them.
pub fn run(config: &McConfig) -> Result<McReport> {
    config.validate()?;
    if config.kind == ModelKind::Simplified && config.policy.tests() != 0 {
        return Err(ModelError::InvalidPolicy(
            "the untested model only accepts t = 0".into(),
        ));
    }
    let paths: Vec<Vec<StateVector>> = (0..config.runs as u64)
        .into_par_iter()
        .map(|r| simulate_run(config, r))
        .collect::<Result<_>>()?;
    let n = config.params.n as f64;
    let threshold = config.death_fraction * n;
    let runs = paths.len();
    let mut steps = Vec::with_capacity(config.depth + 1);
    let mut column = vec![0u32; runs];
    for k in 0..=config.depth {
        let mut mean = [0.0; 8];
        let (mut q05, mut median, mut q95) = ([0u32; 8], [0u32; 8], [0u32; 8]);
        for c in 0..8 {
            for (slot, path) in column.iter_mut().zip(&paths) {
                *slot = path[k].to_array()[c];
            }
            mean[c] = column.iter().map(|&x| x as f64).sum::<f64>() / runs as f64;
            column.sort_unstable();
            q05[c] = quantile(&column, 0.05);
            median[c] = quantile(&column, 0.5);
            q95[c] = quantile(&column, 0.95);
        }
        let ge = paths.iter().filter(|p| p[k].d as f64 >= threshold).count();
        let gt = paths.iter().filter(|p| p[k].d as f64 > threshold).count();
        steps.push(StepStats {
            step: k,
            mean,
            q05,
            median,
            q95,
            deaths_ge: ge as f64 / runs as f64,
            deaths_gt: gt as f64 / runs as f64,
        });
    }
    let finals = paths.iter().map(|p| p[config.depth].d as f64);
    let ge_final = finals.clone().filter(|&d| d >= threshold).count();
    let gt_final = finals.filter(|&d| d > threshold).count();
    let (quantization_abs, quantization_rel) =
        quantization_error(config.real_population, config.params.n)?;
    Ok(McReport {
        config: config.clone(),
        rng: RNG_NAME.to_string(),
        steps,
        deaths_ge_final: ge_final as f64 / runs as f64,
        deaths_ge_ci95: wilson_interval(ge_final, runs),
        deaths_gt_final: gt_final as f64 / runs as f64,
        deaths_gt_ci95: wilson_interval(gt_final, runs),
        quantization_abs,
        quantization_rel,
    })
}
