//! Domain types: population state, parameters, control actions and flows.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Residuals within this distance below zero are treated as floating-point dust.
const RESIDUAL_SLACK: f64 = 1e-12;

/// Compartment cardinalities `(S, A, I, R, O, D, Q, Ra)`.
///
/// The derived ordering is lexicographic in that field order and is the
/// canonical state order used by every table and file.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct StateVector {
    pub s: u32,
    pub a: u32,
    pub i: u32,
    pub r: u32,
    pub o: u32,
    pub d: u32,
    pub q: u32,
    pub ra: u32,
}

impl StateVector {
    #[allow(clippy::too_many_arguments)]
    pub const fn new(s: u32, a: u32, i: u32, r: u32, o: u32, d: u32, q: u32, ra: u32) -> Self {
        StateVector {
            s,
            a,
            i,
            r,
            o,
            d,
            q,
            ra,
        }
    }

    /// A state of the untested model `(S, A, I, R, O, D)`; `Q = Ra = 0`.
    pub const fn untested(s: u32, a: u32, i: u32, r: u32, o: u32, d: u32) -> Self {
        StateVector::new(s, a, i, r, o, d, 0, 0)
    }

    pub const fn from_array(v: [u32; 8]) -> Self {
        StateVector::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7])
    }

    pub const fn to_array(self) -> [u32; 8] {
        [
            self.s, self.a, self.i, self.r, self.o, self.d, self.q, self.ra,
        ]
    }

    pub fn total(&self) -> u32 {
        self.to_array().iter().sum()
    }

    /// Subjects that take part in meetings: `N - D - I - O - Q`.
    pub fn meeting_pool(&self) -> u32 {
        self.s + self.a + self.r + self.ra
    }

    /// Subjects eligible for testing, `N_k = A + S + Ra`.
    pub fn test_pool(&self) -> u32 {
        self.a + self.s + self.ra
    }

    pub fn living(&self) -> u32 {
        self.total() - self.d
    }

    pub fn get(&self, c: Compartment) -> u32 {
        self.to_array()[c as usize]
    }

    /// No subject can leave its compartment: `S`, `R`, `D` and `Ra` only, with no infectious subject.
    pub fn is_absorbing(&self) -> bool {
        self.a == 0 && self.i == 0 && self.o == 0 && self.q == 0
    }

    /// Merge `Ra` into `R`; maps the full model onto the untested one when `Q = 0`.
    pub fn merge_recovered(&self) -> StateVector {
        StateVector {
            r: self.r + self.ra,
            ra: 0,
            ..*self
        }
    }

    /// Checks the population and hospital-capacity invariants.
    pub fn validate(&self, params: &Parameters) -> Result<()> {
        if self.total() != params.n {
            return Err(ModelError::InvalidState {
                state: *self,
                reason: format!("compartments sum to {}, population is {}", self.total(), params.n),
            });
        }
        if self.o > params.c {
            return Err(ModelError::InvalidState {
                state: *self,
                reason: format!("{} hospitalised exceeds capacity {}", self.o, params.c),
            });
        }
        Ok(())
    }

    /// Packs the state into a `u64`, one byte per compartment, `S` most significant.
    ///
    /// Integer order of packed values equals the canonical state order.
    /// Requires every count to be at most 255.
    #[inline]
    pub(crate) fn pack(&self) -> u64 {
        self.to_array()
            .iter()
            .fold(0u64, |acc, &x| (acc << 8) | x as u64)
    }

    #[inline]
    pub(crate) fn unpack(mut packed: u64) -> StateVector {
        let mut v = [0u32; 8];
        for slot in v.iter_mut().rev() {
            *slot = (packed & 0xff) as u32;
            packed >>= 8;
        }
        StateVector::from_array(v)
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{},{},{},{},{},{})",
            self.s, self.a, self.i, self.r, self.o, self.d, self.q, self.ra
        )
    }
}

/// Compartment selector, in state-vector order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compartment {
    S = 0,
    A = 1,
    I = 2,
    R = 3,
    O = 4,
    D = 5,
    Q = 6,
    Ra = 7,
}

impl Compartment {
    pub const ALL: [Compartment; 8] = [
        Compartment::S,
        Compartment::A,
        Compartment::I,
        Compartment::R,
        Compartment::O,
        Compartment::D,
        Compartment::Q,
        Compartment::Ra,
    ];

    pub fn name(&self) -> &'static str {
        ["S", "A", "I", "R", "O", "D", "Q", "Ra"][*self as usize]
    }
}

impl fmt::Display for Compartment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Compartment {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        Compartment::ALL
            .iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| ModelError::Config(format!("unknown compartment `{s}`")))
    }
}

/// Which transition kernel drives the chain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Eight compartments, testing and quarantine.
    #[default]
    Full,
    /// Six compartments, no testing; asymptomatic recoveries are pooled in `R`.
    Simplified,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Full => "full",
            ModelKind::Simplified => "simplified",
        })
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ModelKind::Full),
            "simplified" => Ok(ModelKind::Simplified),
            other => Err(ModelError::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Population size, hospital capacity and the eleven per-subject probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    /// Population size.
    pub n: u32,
    /// Hospital beds.
    pub c: u32,
    /// Infection probability of one meeting with an asymptomatic subject.
    pub omega: f64,
    /// Asymptomatic recovers.
    pub beta: f64,
    /// Asymptomatic develops symptoms.
    pub delta: f64,
    /// Symptomatic recovers.
    pub mu: f64,
    /// Symptomatic dies.
    pub alpha: f64,
    /// Hospitalised dies.
    pub sigma: f64,
    /// Hospitalised recovers.
    pub xi: f64,
    /// A tested asymptomatic subject is found positive.
    pub gamma: f64,
    /// Symptomatic needs hospitalisation.
    pub psi: f64,
    /// Quarantined develops symptoms.
    pub iota: f64,
    /// Quarantined recovers.
    pub upsilon: f64,
}

impl Parameters {
    /// The probability vector used by the bundled experiments:
    /// `(α, β, δ, μ, ω, ψ, σ, ξ) = (0.25, 0.45, 0.25, 0.4, 0.5, 0.35, 0.1, 0.65)`,
    /// with `γ = 0.9`, `ι = 0.2`, `υ = 0.5` for the testing branch.
    pub fn reference(n: u32, c: u32) -> Parameters {
        Parameters {
            n,
            c,
            omega: 0.5,
            beta: 0.45,
            delta: 0.25,
            mu: 0.4,
            alpha: 0.25,
            sigma: 0.1,
            xi: 0.65,
            gamma: 0.9,
            psi: 0.35,
            iota: 0.2,
            upsilon: 0.5,
        }
    }

    /// Every movement probability zero: all subjects stay where they are.
    pub fn frozen(n: u32, c: u32) -> Parameters {
        Parameters {
            n,
            c,
            omega: 0.0,
            beta: 0.0,
            delta: 0.0,
            mu: 0.0,
            alpha: 0.0,
            sigma: 0.0,
            xi: 0.0,
            gamma: 0.0,
            psi: 0.0,
            iota: 0.0,
            upsilon: 0.0,
        }
    }

    pub fn with_capacity(self, c: u32) -> Parameters {
        Parameters { c, ..self }
    }

    fn named(&self) -> [(&'static str, f64); 11] {
        [
            ("omega", self.omega),
            ("beta", self.beta),
            ("delta", self.delta),
            ("mu", self.mu),
            ("alpha", self.alpha),
            ("sigma", self.sigma),
            ("xi", self.xi),
            ("gamma", self.gamma),
            ("psi", self.psi),
            ("iota", self.iota),
            ("upsilon", self.upsilon),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(ModelError::InvalidParameter {
                name: "n",
                reason: "population must be at least 1".into(),
            });
        }
        for (name, p) in self.named() {
            if !(0.0..=1.0).contains(&p) {
                return Err(ModelError::InvalidParameter {
                    name,
                    reason: format!("{p} is not a probability"),
                });
            }
        }
        let residuals = [
            ("beta+delta", 1.0 - self.beta - self.delta),
            ("mu+psi+alpha", 1.0 - self.mu - self.psi - self.alpha),
            ("sigma+xi", 1.0 - self.sigma - self.xi),
            ("iota+upsilon", 1.0 - self.iota - self.upsilon),
        ];
        for (name, r) in residuals {
            if r < -RESIDUAL_SLACK {
                return Err(ModelError::InvalidParameter {
                    name: "residual",
                    reason: format!("{name} exceeds 1 (residual {r})"),
                });
            }
        }
        Ok(())
    }

    /// `C_{β,δ} = 1 - β - δ`.
    pub fn stay_asymptomatic(&self) -> f64 {
        (1.0 - self.beta - self.delta).max(0.0)
    }

    /// `C_{μ,ψ,α} = 1 - μ - ψ - α`.
    pub fn stay_symptomatic(&self) -> f64 {
        (1.0 - self.mu - self.psi - self.alpha).max(0.0)
    }

    /// `C_{σ,ξ} = 1 - σ - ξ`.
    pub fn stay_hospitalised(&self) -> f64 {
        (1.0 - self.sigma - self.xi).max(0.0)
    }

    /// `C_{ι,υ} = 1 - ι - υ`.
    pub fn stay_quarantined(&self) -> f64 {
        (1.0 - self.iota - self.upsilon).max(0.0)
    }
}

/// Control pair: `m` meetings per subject and `t` tests administered in one step.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct Action {
    pub m: u32,
    pub t: u32,
}

impl Action {
    pub const fn new(m: u32, t: u32) -> Self {
        Action { m, t }
    }

    pub const fn meetings(m: u32) -> Self {
        Action { m, t: 0 }
    }

    /// Tests can only be spent on the pool `A + S + Ra`.
    pub fn check_admissible(&self, v: &StateVector) -> Result<()> {
        if self.t > v.test_pool() {
            return Err(ModelError::InadmissibleAction {
                state: *v,
                action: *self,
                reason: format!("{} tests but only {} testable subjects", self.t, v.test_pool()),
            });
        }
        Ok(())
    }

    pub fn is_admissible(&self, v: &StateVector) -> bool {
        self.t <= v.test_pool()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(M={},t={})", self.m, self.t)
    }
}

/// `v' - v`, ordered like [`StateVector`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateDelta(pub [i64; 8]);

impl StateDelta {
    pub fn between(from: &StateVector, to: &StateVector) -> StateDelta {
        let a = from.to_array();
        let b = to.to_array();
        StateDelta(std::array::from_fn(|k| b[k] as i64 - a[k] as i64))
    }

    pub fn s(&self) -> i64 {
        self.0[0]
    }
    pub fn a(&self) -> i64 {
        self.0[1]
    }
    pub fn i(&self) -> i64 {
        self.0[2]
    }
    pub fn r(&self) -> i64 {
        self.0[3]
    }
    pub fn o(&self) -> i64 {
        self.0[4]
    }
    pub fn d(&self) -> i64 {
        self.0[5]
    }
    pub fn q(&self) -> i64 {
        self.0[6]
    }
    pub fn ra(&self) -> i64 {
        self.0[7]
    }
}

/// Subject counts along the eleven arcs of the compartment graph.
///
/// Index `k` holds `Δ_{k+1}`: S→A, A→I, A→Ra, I→R, I→O, I→D, O→D, O→R, A→Q, Q→I, Q→R.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct FlowVector(pub [u32; 11]);

impl FlowVector {
    /// Net change produced by the flows (the left-hand sides of the balance equations).
    pub fn state_delta(&self) -> StateDelta {
        let d: [i64; 11] = std::array::from_fn(|k| self.0[k] as i64);
        StateDelta([
            -d[0],
            d[0] - d[1] - d[2] - d[8],
            d[9] + d[1] - d[3] - d[4] - d[5],
            d[3] + d[7] + d[10],
            d[4] - d[6] - d[7],
            d[5] + d[6],
            d[8] - d[9] - d[10],
            d[2],
        ])
    }

    /// Outflows never exceed the population of their source compartment.
    pub fn respects_outflows(&self, v: &StateVector) -> bool {
        let d = &self.0;
        d[0] <= v.s
            && d[1] + d[2] + d[8] <= v.a
            && d[9] + d[10] <= v.q
            && d[3] + d[4] + d[5] <= v.i
            && d[6] + d[7] <= v.o
    }

    /// Balance equations against `delta` plus the outflow bounds.
    pub fn is_feasible(&self, v: &StateVector, delta: &StateDelta) -> bool {
        self.respects_outflows(v) && self.state_delta() == *delta
    }

    pub fn apply(&self, v: &StateVector) -> Option<StateVector> {
        if !self.respects_outflows(v) {
            return None;
        }
        let delta = self.state_delta();
        let cur = v.to_array();
        let mut next = [0u32; 8];
        for k in 0..8 {
            next[k] = u32::try_from(cur[k] as i64 + delta.0[k]).ok()?;
        }
        Some(StateVector::from_array(next))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pack_roundtrip_and_order() {
        let a = StateVector::new(3, 1, 0, 2, 1, 0, 0, 4);
        let b = StateVector::new(3, 1, 0, 2, 1, 0, 1, 0);
        assert_eq!(StateVector::unpack(a.pack()), a);
        assert_eq!(a.cmp(&b), a.pack().cmp(&b.pack()));
        assert!(a < b);
    }

    #[test]
    fn validation() {
        let p = Parameters::reference(4, 1);
        p.validate().unwrap();
        assert!(StateVector::untested(3, 1, 0, 0, 0, 0).validate(&p).is_ok());
        assert!(StateVector::untested(3, 0, 0, 0, 0, 0).validate(&p).is_err());
        assert!(StateVector::untested(2, 0, 0, 0, 2, 0).validate(&p).is_err());
        let bad = Parameters {
            beta: 0.8,
            delta: 0.3,
            ..p
        };
        assert!(bad.validate().is_err());
        assert!(Parameters { omega: 1.2, ..p }.validate().is_err());
    }

    #[test]
    fn reference_residuals() {
        let p = Parameters::reference(20, 5);
        assert!((p.stay_asymptomatic() - 0.3).abs() < 1e-15);
        assert!(p.stay_symptomatic().abs() < 1e-15);
        assert!((p.stay_hospitalised() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn flow_balance() {
        let v = StateVector::new(2, 2, 1, 0, 1, 0, 1, 0);
        // one infection, one A->I, one I->O, one O->R, one Q->R
        let mut f = FlowVector::default();
        f.0[0] = 1;
        f.0[1] = 1;
        f.0[4] = 1;
        f.0[7] = 1;
        f.0[10] = 1;
        let next = f.apply(&v).unwrap();
        assert_eq!(next, StateVector::new(1, 2, 1, 2, 1, 0, 0, 0));
        assert_eq!(next.total(), v.total());
        assert!(f.is_feasible(&v, &StateDelta::between(&v, &next)));
    }
}
