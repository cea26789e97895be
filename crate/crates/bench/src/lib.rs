//! Benchmark fixtures shared by the criterion targets.

use sairod::{ModelKind, Parameters, Policy, StateVector};

/// A mid-epidemic state of the full model with every compartment occupied.
pub fn busy_state(n: u32) -> StateVector {
    let k = n / 8;
    StateVector::new(n - 7 * k, k, k, k, k.min(2), k, k, k + (k - k.min(2)))
}

/// Half the mass on `(N-3, 3)` and half on `(N-1, 1)`, untested model.
pub fn seed_mixture(n: u32) -> Vec<(StateVector, f64)> {
    vec![
        (StateVector::untested(n - 3, 3, 0, 0, 0, 0), 0.5),
        (StateVector::untested(n - 1, 1, 0, 0, 0, 0), 0.5),
    ]
}

pub fn untested_setup(n: u32, c: u32, m: u32) -> (Parameters, ModelKind, Policy) {
    (Parameters::reference(n, c), ModelKind::Simplified, Policy::constant(m))
}
