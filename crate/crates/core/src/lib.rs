//! Exact discrete-time Markov engine for a SAIROD epidemic with testing,
//! quarantine and finite hospital capacity.
//!
//! The crate enumerates population states, computes closed-form one-step
//! transition laws under control actions (meetings `M`, tests `t`), reduces
//! the decision process to a Markov chain by fixing a policy, solves the chain
//! for transient and limiting queries, simulates it by Monte Carlo and
//! exports explicit-state models for external probabilistic model checkers.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod combinatorics;
pub mod config;
pub mod error;
pub mod experiment;
pub mod export;
pub mod kernels;
pub mod model;
pub mod montecarlo;
pub mod policy;
pub mod solver;
pub mod space;
pub mod transition;

pub use error::{ErrorKind, ModelError, Result};
pub use model::{
    Action, Compartment, FlowVector, ModelKind, Parameters, StateDelta, StateVector,
};
pub use transition::{
    model_distribution, simplified_transition_distribution, simplified_transition_probability,
    transition_distribution, transition_probability, Row,
};
pub use space::{
    build_reachable, enumerate_all, state_count, ActionSet, StateIndex, StateSpace, TransitionTable,
};
pub use policy::{
    adaptive_m, apply_policy, build_policy_dtmc, AdaptiveConfig, Dtmc, Policy, Rounding, Signal,
};
pub use solver::{
    converge, evolve, expected_action, limit_distribution, marginal_cdf, query_probability, step,
    Convergence, Distribution,
};
pub use montecarlo::{quantization_error, sample_transition, McConfig, McReport};
pub use export::{export_dtmc, export_mdp, import_dtmc, ExportOptions, Label};
