//! TOML experiment configuration.
//!
//! ```toml
//! seed = 1
//! output = "out"
//! kind = "simplified"
//!
//! [parameters]            # any probability left out takes its reference value
//! n = 20
//! c = 5
//!
//! [[initial]]
//! state = [17, 3, 0, 0, 0, 0]   # six entries (Q = Ra = 0) or eight
//! weight = 0.5
//!
//! [[policies]]
//! kind = "constant"
//! m = 2
//!
//! [[policies]]
//! kind = "adaptive"
//! signal = "asymptomatic"
//! t_low = 0.05
//! t_high = 0.15
//! m_low = 1
//! m_high = 5
//!
//! [queries]
//! death_fraction = 0.2
//! steps = 40
//! cdf = ["d", "r", "s"]
//!
//! [sweep]
//! m = [1, 2, 3, 4, 5]
//! c = [1, 2, 3, 5]
//!
//! [montecarlo]
//! runs = 1000
//! depth = 100
//! scale = 5
//!
//! [export]
//! stem = "model"
//! prism_headers = true
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::model::{Action, Compartment, ModelKind, Parameters, StateVector};
use crate::policy::Policy;
use crate::solver::{DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
use crate::space::{validate_for, ActionSet};

/// Population, capacity and optional overrides of the reference probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSpec {
    pub n: u32,
    pub c: u32,
    pub omega: Option<f64>,
    pub beta: Option<f64>,
    pub delta: Option<f64>,
    pub mu: Option<f64>,
    pub alpha: Option<f64>,
    pub sigma: Option<f64>,
    pub xi: Option<f64>,
    pub gamma: Option<f64>,
    pub psi: Option<f64>,
    pub iota: Option<f64>,
    pub upsilon: Option<f64>,
}

impl ParameterSpec {
    pub fn resolve(&self) -> Parameters {
        let r = Parameters::reference(self.n, self.c);
        Parameters {
            n: self.n,
            c: self.c,
            omega: self.omega.unwrap_or(r.omega),
            beta: self.beta.unwrap_or(r.beta),
            delta: self.delta.unwrap_or(r.delta),
            mu: self.mu.unwrap_or(r.mu),
            alpha: self.alpha.unwrap_or(r.alpha),
            sigma: self.sigma.unwrap_or(r.sigma),
            xi: self.xi.unwrap_or(r.xi),
            gamma: self.gamma.unwrap_or(r.gamma),
            psi: self.psi.unwrap_or(r.psi),
            iota: self.iota.unwrap_or(r.iota),
            upsilon: self.upsilon.unwrap_or(r.upsilon),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialEntry {
    /// `(S, A, I, R, O, D)` or `(S, A, I, R, O, D, Q, Ra)`.
    pub state: Vec<u32>,
    pub weight: f64,
}

impl InitialEntry {
    pub fn vector(&self) -> Result<StateVector> {
        match self.state.len() {
            6 => {
                let s = &self.state;
                Ok(StateVector::untested(s[0], s[1], s[2], s[3], s[4], s[5]))
            }
            8 => Ok(StateVector::from_array(self.state.clone().try_into().expect("length 8"))),
            k => Err(ModelError::Config(format!(
                "initial states need 6 or 8 entries, got {k}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    /// Threshold `θ` of the benchmark `Pr{D >= θ N}`.
    #[serde(default = "default_death_fraction")]
    pub death_fraction: f64,
    /// Length of the transient series.
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Compartments whose limiting CDF is written.
    #[serde(default = "default_cdf")]
    pub cdf: Vec<Compartment>,
}

fn default_death_fraction() -> f64 {
    0.2
}
fn default_steps() -> usize {
    40
}
fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}
fn default_max_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}
fn default_cdf() -> Vec<Compartment> {
    vec![Compartment::D, Compartment::R, Compartment::S]
}

impl Default for QuerySpec {
    fn default() -> Self {
        QuerySpec {
            death_fraction: default_death_fraction(),
            steps: default_steps(),
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
            cdf: default_cdf(),
        }
    }
}

/// Grid of constant meeting counts and capacities for the limit sweep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub m: Vec<u32>,
    pub c: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    pub runs: usize,
    pub depth: usize,
    /// Multiplies population, capacity, initial counts and meetings.
    #[serde(default = "default_scale")]
    pub scale: u32,
    /// Real population represented; defaults to the scaled population.
    pub real_population: Option<f64>,
}

fn default_scale() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportSpec {
    #[serde(default = "default_stem")]
    pub stem: String,
    #[serde(default)]
    pub prism_headers: bool,
}

fn default_stem() -> String {
    "model".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub kind: ModelKind,
    pub parameters: ParameterSpec,
    pub initial: Vec<InitialEntry>,
    #[serde(default)]
    pub policies: Vec<Policy>,
    /// Action set of the decision process built by `build` and MDP export.
    #[serde(default)]
    pub actions: Vec<Action>,
    #[serde(default)]
    pub queries: QuerySpec,
    pub sweep: Option<SweepSpec>,
    pub montecarlo: Option<MonteCarloSpec>,
    pub export: Option<ExportSpec>,
}

fn default_seed() -> u64 {
    1
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ModelError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            ModelError::Config(msg) => ModelError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn params(&self) -> Parameters {
        self.parameters.resolve()
    }

    /// The initial mixture as validated states with weights.
    pub fn initial_mixture(&self) -> Result<Vec<(StateVector, f64)>> {
        self.initial
            .iter()
            .map(|e| Ok((e.vector()?, e.weight)))
            .collect()
    }

    pub fn action_set(&self) -> Result<ActionSet> {
        ActionSet::new(self.actions.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let params = self.params();
        params.validate()?;
        if self.initial.is_empty() {
            return Err(ModelError::Config("at least one initial state is required".into()));
        }
        let mixture = self.initial_mixture()?;
        for (v, w) in &mixture {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(ModelError::Config(format!("weight {w} of {v} is negative")));
            }
            validate_for(self.kind, v, &params)?;
        }
        let mass: f64 = mixture.iter().map(|e| e.1).sum();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(ModelError::Config(format!(
                "initial weights sum to {mass}, expected 1"
            )));
        }
        for p in &self.policies {
            p.validate()?;
            if self.kind == ModelKind::Simplified && p.tests() != 0 {
                return Err(ModelError::Config(format!(
                    "policy {} uses tests but the model kind is simplified",
                    p.name()
                )));
            }
        }
        if self.kind == ModelKind::Simplified && self.actions.iter().any(|a| a.t != 0) {
            return Err(ModelError::Config(
                "actions with tests need the full model kind".into(),
            ));
        }
        let q = &self.queries;
        if !(0.0..=1.0).contains(&q.death_fraction) {
            return Err(ModelError::Config("death_fraction must lie in [0, 1]".into()));
        }
        if !(q.tolerance > 0.0) {
            return Err(ModelError::Config("tolerance must be positive".into()));
        }
        if let Some(s) = &self.sweep {
            if s.m.is_empty() || s.c.is_empty() {
                return Err(ModelError::Config("sweep needs at least one M and one C".into()));
            }
            if s.m.contains(&0) {
                return Err(ModelError::Config("sweep meeting counts must be positive".into()));
            }
        }
        if let Some(mc) = &self.montecarlo {
            if mc.runs == 0 || mc.scale == 0 {
                return Err(ModelError::Config("montecarlo runs and scale must be positive".into()));
            }
        }
        if let Some(e) = &self.export {
            if e.stem.is_empty() || e.stem.contains(['/', '\\']) {
                return Err(ModelError::Config("export stem must be a plain file name".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Signal;

    const SAMPLE: &str = r#"
        seed = 7
        kind = "simplified"
        [parameters]
        n = 6
        c = 2
        omega = 0.3
        [[initial]]
        state = [5, 1, 0, 0, 0, 0]
        weight = 1.0
        [[policies]]
        kind = "constant"
        m = 2
        [[policies]]
        kind = "adaptive"
        signal = "asymptomatic"
        t_low = 0.05
        t_high = 0.15
        m_low = 1
        m_high = 5
    "#;

    #[test]
    fn parses_and_fills_defaults() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.kind, ModelKind::Simplified);
        let p = cfg.params();
        assert_eq!(p.omega, 0.3);
        assert_eq!(p.beta, Parameters::reference(6, 2).beta);
        assert_eq!(cfg.policies[0], Policy::constant(2));
        match &cfg.policies[1] {
            Policy::Adaptive { config, t } => {
                assert_eq!(config.signal, Signal::Asymptomatic);
                assert_eq!(*t, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(cfg.queries, QuerySpec::default());
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_bad_input() {
        let bad_weight = SAMPLE.replace("weight = 1.0", "weight = 0.7");
        assert!(matches!(
            ExperimentConfig::from_toml(&bad_weight),
            Err(ModelError::Config(_))
        ));
        let bad_state = SAMPLE.replace("[5, 1, 0, 0, 0, 0]", "[5, 2, 0, 0, 0, 0]");
        assert!(ExperimentConfig::from_toml(&bad_state).is_err());
        let unknown = SAMPLE.replace("seed = 7", "seeed = 7");
        assert!(ExperimentConfig::from_toml(&unknown).is_err());
        let tests = SAMPLE.replace("m = 2\n", "m = 2\n t = 1\n");
        assert!(ExperimentConfig::from_toml(&tests).is_err());
    }
}
