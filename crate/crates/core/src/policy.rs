//! Policies, the adaptive meeting heuristics and reduction of the decision
//! process to a Markov chain.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::model::{Action, ModelKind, Parameters, StateVector};
use crate::space::{explore, StateIndex, StateSpace, TransitionTable, DEFAULT_STATE_BUDGET};
use crate::transition::NORMALIZATION_TOLERANCE;

/// Observation driving an adaptive policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signal {
    /// `(I + O) / (N - D)`: symptomatic and hospitalised share of the living.
    Symptomatic,
    /// `A / (N - D)`: asymptomatic share of the living.
    Asymptomatic,
}

/// How the interpolated meeting count becomes an action.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    /// Nearest integer, ties upward.
    #[default]
    HalfUp,
    /// Keep the real value; the infection exponent is evaluated at it.
    Unrounded,
}

/// Thresholds and bounds of the piecewise-linear meeting rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub t_low: f64,
    pub t_high: f64,
    pub m_low: u32,
    pub m_high: u32,
    pub signal: Signal,
    #[serde(default)]
    pub rounding: Rounding,
}

impl AdaptiveConfig {
    pub fn new(t_low: f64, t_high: f64, m_low: u32, m_high: u32, signal: Signal) -> Self {
        AdaptiveConfig {
            t_low,
            t_high,
            m_low,
            m_high,
            signal,
            rounding: Rounding::HalfUp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(in_unit(self.t_low) && in_unit(self.t_high) && self.t_low < self.t_high) {
            return Err(ModelError::InvalidPolicy(format!(
                "thresholds must satisfy 0 <= T_low < T_high <= 1, got {} and {}",
                self.t_low, self.t_high
            )));
        }
        if self.m_low > self.m_high {
            return Err(ModelError::InvalidPolicy(format!(
                "M_low = {} exceeds M_high = {}",
                self.m_low, self.m_high
            )));
        }
        Ok(())
    }

    /// The observed fraction `f(v)`.
    pub fn signal_value(&self, v: &StateVector, n: u32) -> Result<f64> {
        let living = n.checked_sub(v.d).filter(|&l| l > 0).ok_or_else(|| {
            ModelError::InvalidState {
                state: *v,
                reason: "no living subjects, the adaptive signal is undefined".into(),
            }
        })?;
        let numerator = match self.signal {
            Signal::Symptomatic => v.i + v.o,
            Signal::Asymptomatic => v.a,
        };
        Ok(numerator as f64 / living as f64)
    }

    /// Real-valued meeting count before rounding.
    pub fn interpolate(&self, f: f64) -> f64 {
        let (hi, lo) = (self.m_high as f64, self.m_low as f64);
        if f <= self.t_low {
            hi
        } else if f >= self.t_high {
            lo
        } else {
            hi + (lo - hi) * (f - self.t_low) / (self.t_high - self.t_low)
        }
    }
}

/// Rounds half up; the slack absorbs representation error such as `2.4999999999999996`.
fn round_half_up(x: f64) -> u32 {
    (x + 0.5 + 1e-9).floor() as u32
}

/// Integer meeting count of the adaptive rule, rounded half up.
pub fn adaptive_m(v: &StateVector, cfg: &AdaptiveConfig, n: u32) -> Result<u32> {
    let f = cfg.signal_value(v, n)?;
    Ok(round_half_up(cfg.interpolate(f)).clamp(cfg.m_low, cfg.m_high))
}

/// A total map from states to actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Policy {
    Constant {
        m: u32,
        #[serde(default)]
        t: u32,
    },
    Adaptive {
        #[serde(flatten)]
        config: AdaptiveConfig,
        #[serde(default)]
        t: u32,
    },
}

impl Policy {
    pub fn constant(m: u32) -> Policy {
        Policy::Constant { m, t: 0 }
    }

    pub fn adaptive(config: AdaptiveConfig) -> Policy {
        Policy::Adaptive { config, t: 0 }
    }

    pub fn name(&self) -> String {
        match self {
            Policy::Constant { m, t: 0 } => format!("M={m}"),
            Policy::Constant { m, t } => format!("M={m},t={t}"),
            Policy::Adaptive { config, .. } => match config.signal {
                Signal::Symptomatic => "AS".to_string(),
                Signal::Asymptomatic => "AA".to_string(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Policy::Constant { .. } => Ok(()),
            Policy::Adaptive { config, .. } => config.validate(),
        }
    }

    /// Meeting count and test count chosen in `v`.
    ///
    /// The meeting count is real-valued only for unrounded adaptive rules.
    /// Tests are capped by the testable pool `A + S + Ra` so the action is
    /// always admissible. In the all-deceased state, where the adaptive signal
    /// is `0/0`, adaptive rules return `M_high`; that state is absorbing, so
    /// the choice only affects the expected-action query.
    pub fn choose(&self, v: &StateVector, n: u32) -> Result<(f64, u32)> {
        let (m, t) = match self {
            Policy::Constant { m, t } => (*m as f64, *t),
            Policy::Adaptive { config, t } if v.d >= n => (config.m_high as f64, *t),
            Policy::Adaptive { config, t } => {
                let m = match config.rounding {
                    Rounding::HalfUp => adaptive_m(v, config, n)? as f64,
                    Rounding::Unrounded => config.interpolate(config.signal_value(v, n)?),
                };
                (m, *t)
            }
        };
        Ok((m, t.min(v.test_pool())))
    }

    /// Integer action chosen in `v`; errors for unrounded rules off the integer grid.
    pub fn action(&self, v: &StateVector, n: u32) -> Result<Action> {
        let (m, t) = self.choose(v, n)?;
        if m.fract() != 0.0 {
            return Err(ModelError::InvalidPolicy(format!(
                "policy {} selects a non-integer meeting count {m} in {v}",
                self.name()
            )));
        }
        Ok(Action::new(m as u32, t))
    }

    /// Tests requested per step, before capping by the testable pool.
    pub fn tests(&self) -> u32 {
        match self {
            Policy::Constant { t, .. } | Policy::Adaptive { t, .. } => *t,
        }
    }

    /// Meeting count used in `v` (the quantity averaged by the expected-action query).
    pub fn meetings(&self, v: &StateVector, n: u32) -> Result<f64> {
        self.choose(v, n).map(|c| c.0)
    }
}

/// A row-stochastic single-action chain over a [`StateSpace`], stored in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct Dtmc {
    space: StateSpace,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    probs: Vec<f64>,
}

impl Dtmc {
    /// Assembles a chain from per-state rows.
    ///
    /// Rows are stored as given; a row whose mass deviates from 1 by more than
    /// the normalization tolerance is rejected.
    pub fn from_rows(space: StateSpace, rows: Vec<Vec<(u32, f64)>>) -> Result<Dtmc> {
        if rows.len() != space.len() {
            return Err(ModelError::DimensionMismatch {
                expected: space.len(),
                actual: rows.len(),
            });
        }
        if space.is_empty() {
            return Err(ModelError::EmptyModel("chain without states".into()));
        }
        let mut offsets = vec![0];
        let mut targets = Vec::new();
        let mut probs = Vec::new();
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|e| e.0);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(ModelError::InvalidState {
                        state: space.state(i),
                        reason: format!("duplicate transition to index {}", w[0].0),
                    });
                }
            }
            if let Some(&(j, _)) = row.iter().find(|e| e.0 as usize >= space.len()) {
                return Err(ModelError::IndexOutOfRange {
                    index: j as usize,
                    len: space.len(),
                });
            }
            if row.iter().any(|e| !(e.1 > 0.0 && e.1 <= 1.0)) {
                return Err(ModelError::InvalidState {
                    state: space.state(i),
                    reason: "transition probabilities must lie in (0, 1]".into(),
                });
            }
            let mass: f64 = row.iter().map(|e| e.1).sum();
            if !((mass - 1.0).abs() <= NORMALIZATION_TOLERANCE) {
                return Err(ModelError::Normalization {
                    mass,
                    deviation: (mass - 1.0).abs(),
                    context: format!(" (row {i}, state {})", space.state(i)),
                });
            }
            targets.extend(row.iter().map(|e| e.0));
            probs.extend(row.iter().map(|e| e.1));
            offsets.push(targets.len());
        }
        Ok(Dtmc {
            space,
            offsets,
            targets,
            probs,
        })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn num_states(&self) -> usize {
        self.space.len()
    }

    pub fn nnz(&self) -> usize {
        self.targets.len()
    }

    pub fn row(&self, i: StateIndex) -> (&[u32], &[f64]) {
        let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
        (&self.targets[lo..hi], &self.probs[lo..hi])
    }

    /// Largest deviation of a row sum from 1.
    pub fn max_row_deviation(&self) -> f64 {
        (0..self.num_states())
            .map(|i| (self.row(i).1.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Selects the policy's action in every state of an MDP table.
pub fn apply_policy(
    space: &StateSpace,
    table: &TransitionTable,
    policy: &Policy,
) -> Result<Dtmc> {
    policy.validate()?;
    if table.num_states() != space.len() {
        return Err(ModelError::DimensionMismatch {
            expected: space.len(),
            actual: table.num_states(),
        });
    }
    let n = space.population();
    let mut offsets = Vec::with_capacity(space.len() + 1);
    let mut targets = Vec::new();
    let mut probs = Vec::new();
    offsets.push(0);
    for (i, v) in space.iter().enumerate() {
        let action = policy.action(&v, n)?;
        let (dst, p) = table
            .action_set()
            .index_of(&action)
            .and_then(|a| table.row(i, a))
            .ok_or(ModelError::MissingAction { state: v, action })?;
        targets.extend_from_slice(dst);
        probs.extend_from_slice(p);
        offsets.push(targets.len());
    }
    Ok(Dtmc {
        space: space.clone(),
        offsets,
        targets,
        probs,
    })
}

/// Builds the chain induced by `policy` directly, visiting only states it reaches.
///
/// Equivalent to building the full table and applying the policy, without
/// materializing rows for actions the policy never selects.
pub fn build_policy_dtmc(
    initial: &[StateVector],
    policy: &Policy,
    params: &Parameters,
    kind: ModelKind,
) -> Result<Dtmc> {
    policy.validate()?;
    let n = params.n;
    let closure = explore(initial, kind, params, DEFAULT_STATE_BUDGET, |v| {
        let (m, t) = policy.choose(v, n)?;
        if kind == ModelKind::Simplified && t != 0 {
            return Err(ModelError::InvalidPolicy(
                "the untested model only accepts t = 0".into(),
            ));
        }
        Ok(vec![Some((m, t))])
    })?;
    let csr = closure.into_csr();
    Ok(Dtmc {
        space: StateSpace::from_sorted_keys(kind, params, csr.keys),
        offsets: csr.offsets,
        targets: csr.targets,
        probs: csr.probs,
    })
}

/// The chain induced by a single constant action over a built MDP table.
pub fn constant_dtmc(space: &StateSpace, table: &TransitionTable, action: Action) -> Result<Dtmc> {
    apply_policy(
        space,
        table,
        &Policy::Constant {
            m: action.m,
            t: action.t,
        },
    )
}
