//! One-step transition law of the population chain.
//!
//! Two routes are provided for the full model:
//!
//! * [`transition_probability`] evaluates a single pair `(v, v')` through the
//!   nested sums over the free flows (`δ2` outer, then `δ4, δ5, δ6`), with every
//!   other flow fixed by the balance equations.
//! * [`transition_distribution`] enumerates the whole support. Flows are
//!   visited compartment by compartment in the same order (`Δ1`, then
//!   `(δ2, δ3, δ9)`, then `(δ4, δ5, δ6)`, `(δ7, δ8)`, `(δ10, δ11)`); partial
//!   outcomes that lead to the same intermediate population are merged after
//!   each compartment, so each feasible flow vector contributes exactly once.
//!
//! The untested model has its own pair of routes.

use crate::combinatorics::{binomial_pmf_unchecked, binomial_pmf_vec};
use crate::error::{ModelError, Result};
use crate::kernels::{
    chi, free_beds, infection_probability, infection_probability_real, phi,
    positive_test_pmf_unchecked, rho, rho_e_with_pmf, zeta,
};
use crate::model::{Action, Compartment, ModelKind, Parameters, StateDelta, StateVector};

/// Row mass may drift from 1 by this much before it is treated as a bug.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Largest population the packed state representation supports.
pub const MAX_EXACT_POPULATION: u32 = 255;

/// Sparse next-state law, sorted by state.
pub type Row = Vec<(StateVector, f64)>;

fn check_pair(v: &StateVector, action: &Action, params: &Parameters) -> Result<()> {
    params.validate()?;
    v.validate(params)?;
    action.check_admissible(v)
}

fn check_untested(v: &StateVector) -> Result<()> {
    if v.q != 0 || v.ra != 0 {
        return Err(ModelError::InvalidState {
            state: *v,
            reason: "the untested model has no Q or Ra compartment".into(),
        });
    }
    Ok(())
}

#[inline]
fn nonneg(x: i64) -> Option<u32> {
    u32::try_from(x).ok()
}

/// `Pr{V_{k+1} = v2 | V_k = v}` in the full model.
pub fn transition_probability(
    v: &StateVector,
    v2: &StateVector,
    action: &Action,
    params: &Parameters,
) -> Result<f64> {
    check_pair(v, action, params)?;
    v2.validate(params)?;
    let dv = StateDelta::between(v, v2);

    let Some(d1) = nonneg(-dv.s()) else {
        return Ok(0.0);
    };
    let pg = infection_probability(v, action.m, params);
    let l1 = binomial_pmf_unchecked(v.s, pg, d1 as i64);
    if l1 == 0.0 {
        return Ok(0.0);
    }

    let (Some(d3), Some(leaving_a)) = (nonneg(dv.ra()), nonneg(-dv.s() - dv.a() - dv.ra())) else {
        return Ok(0.0);
    };
    let test_pmf = positive_test_pmf_unchecked(v, action.t, params.gamma);

    let mut total = 0.0;
    for d2 in 0..=leaving_a {
        let d9 = leaving_a - d2;
        let l2 = rho_e_with_pmf(d2, d3, d9, v, &test_pmf, params);
        if l2 == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for d4 in 0..=v.i {
            for d5 in 0..=v.i - d4 {
                for d6 in 0..=v.i - d4 - d5 {
                    let l3 = phi(d4, d5, d6, v, params);
                    if l3 == 0.0 {
                        continue;
                    }
                    let moved = (d4 + d5 + d6) as i64;
                    let flows = (
                        nonneg(dv.d() - d6 as i64),
                        nonneg(d5 as i64 + d6 as i64 - dv.d() - dv.o()),
                        nonneg(dv.i() - d2 as i64 + moved),
                        nonneg(dv.r() + dv.d() + dv.o() - moved),
                    );
                    let (Some(d7), Some(d8), Some(d10), Some(d11)) = flows else {
                        continue;
                    };
                    inner += l3 * zeta(d7, d8, v, params) * chi(d10, d11, v, params);
                }
            }
        }
        total += l2 * inner;
    }
    Ok(l1 * total)
}

/// `Pr{V_{k+1} = v2 | V_k = v}` in the untested model (states with `Q = Ra = 0`).
pub fn simplified_transition_probability(
    v: &StateVector,
    v2: &StateVector,
    m: u32,
    params: &Parameters,
) -> Result<f64> {
    check_pair(v, &Action::meetings(m), params)?;
    v2.validate(params)?;
    check_untested(v)?;
    check_untested(v2)?;
    let dv = StateDelta::between(v, v2);

    let Some(d1) = nonneg(-dv.s()) else {
        return Ok(0.0);
    };
    let pg = infection_probability(v, m, params);
    let l1 = binomial_pmf_unchecked(v.s, pg, d1 as i64);
    let Some(leaving_a) = nonneg(-dv.s() - dv.a()) else {
        return Ok(0.0);
    };
    if l1 == 0.0 {
        return Ok(0.0);
    }

    let mut total = 0.0;
    for d2 in 0..=leaving_a {
        let l2 = rho(d2, leaving_a - d2, v, params);
        let Some(leaving_i) = nonneg(d2 as i64 - dv.i()) else {
            continue;
        };
        if l2 == 0.0 {
            continue;
        }
        for d4 in 0..=leaving_i {
            for d5 in 0..=leaving_i - d4 {
                let d6 = leaving_i - d4 - d5;
                let l3 = phi(d4, d5, d6, v, params);
                if l3 == 0.0 {
                    continue;
                }
                let d7 = nonneg(dv.d() + dv.i() - d2 as i64 + d4 as i64 + d5 as i64);
                let d8 = nonneg(d2 as i64 - d4 as i64 - dv.d() - dv.i() - dv.o());
                if let (Some(d7), Some(d8)) = (d7, d8) {
                    total += l2 * l3 * zeta(d7, d8, v, params);
                }
            }
        }
    }
    Ok(l1 * total)
}

/// Full next-state law of the full model under `action`.
pub fn transition_distribution(v: &StateVector, action: &Action, params: &Parameters) -> Result<Row> {
    check_pair(v, action, params)?;
    let packed = packed_distribution(ModelKind::Full, v, action.m as f64, action.t, params)?;
    Ok(unpack_row(packed))
}

/// Full next-state law of the untested model; `action.t` must be 0.
pub fn simplified_transition_distribution(
    v: &StateVector,
    action: &Action,
    params: &Parameters,
) -> Result<Row> {
    check_pair(v, action, params)?;
    check_untested(v)?;
    if action.t != 0 {
        return Err(ModelError::InadmissibleAction {
            state: *v,
            action: *action,
            reason: "the untested model administers no tests".into(),
        });
    }
    let packed = packed_distribution(ModelKind::Simplified, v, action.m as f64, 0, params)?;
    Ok(unpack_row(packed))
}

/// Next-state law for either model kind.
pub fn model_distribution(
    kind: ModelKind,
    v: &StateVector,
    action: &Action,
    params: &Parameters,
) -> Result<Row> {
    match kind {
        ModelKind::Full => transition_distribution(v, action, params),
        ModelKind::Simplified => simplified_transition_distribution(v, action, params),
    }
}

fn unpack_row(packed: Vec<(u64, f64)>) -> Row {
    packed
        .into_iter()
        .map(|(k, p)| (StateVector::unpack(k), p))
        .collect()
}

/// Rescales a row whose mass is within [`NORMALIZATION_TOLERANCE`] of 1, errors otherwise.
pub fn normalize<K>(row: &mut [(K, f64)], context: impl FnOnce() -> String) -> Result<()> {
    let mass: f64 = row.iter().map(|e| e.1).sum();
    let deviation = (mass - 1.0).abs();
    if !(deviation <= NORMALIZATION_TOLERANCE) {
        return Err(ModelError::Normalization {
            mass,
            deviation,
            context: format!(" ({})", context()),
        });
    }
    if deviation > 0.0 {
        for e in row.iter_mut() {
            e.1 /= mass;
        }
    }
    Ok(())
}

#[inline]
const fn unit(c: Compartment) -> u64 {
    1u64 << (8 * (7 - c as u32))
}

/// One compartment's outcomes: `(subtract, add, probability)` on packed states.
type Moves = Vec<(u64, u64, f64)>;

fn push_move(moves: &mut Moves, from: Compartment, out: &[(Compartment, u32)], p: f64) {
    if p == 0.0 {
        return;
    }
    let total: u32 = out.iter().map(|&(_, k)| k).sum();
    let add = out.iter().map(|&(c, k)| k as u64 * unit(c)).sum();
    moves.push((total as u64 * unit(from), add, p));
}

fn infection_moves(v: &StateVector, meetings: f64, params: &Parameters) -> Moves {
    let pg = infection_probability_real(v, meetings, params);
    let mut moves = Moves::new();
    for (k, p) in binomial_pmf_vec(v.s, pg).into_iter().enumerate() {
        push_move(&mut moves, Compartment::S, &[(Compartment::A, k as u32)], p);
    }
    moves
}

fn tested_asymptomatic_moves(v: &StateVector, t: u32, params: &Parameters) -> Moves {
    let pmf = positive_test_pmf_unchecked(v, t, params.gamma);
    let mut moves = Moves::new();
    for d2 in 0..=v.a {
        for d3 in 0..=v.a - d2 {
            for d9 in 0..=(v.a - d2 - d3).min(t) {
                let p = rho_e_with_pmf(d2, d3, d9, v, &pmf, params);
                push_move(
                    &mut moves,
                    Compartment::A,
                    &[
                        (Compartment::I, d2),
                        (Compartment::Ra, d3),
                        (Compartment::Q, d9),
                    ],
                    p,
                );
            }
        }
    }
    moves
}

fn untested_asymptomatic_moves(v: &StateVector, params: &Parameters) -> Moves {
    let mut moves = Moves::new();
    for d2 in 0..=v.a {
        for d3 in 0..=v.a - d2 {
            let p = rho(d2, d3, v, params);
            push_move(
                &mut moves,
                Compartment::A,
                &[(Compartment::I, d2), (Compartment::R, d3)],
                p,
            );
        }
    }
    moves
}

fn symptomatic_moves(v: &StateVector, params: &Parameters) -> Moves {
    let free = free_beds(v, params);
    let mut moves = Moves::new();
    for d4 in 0..=v.i {
        for d5 in 0..=(v.i - d4).min(free) {
            for d6 in 0..=v.i - d4 - d5 {
                let p = phi(d4, d5, d6, v, params);
                push_move(
                    &mut moves,
                    Compartment::I,
                    &[
                        (Compartment::R, d4),
                        (Compartment::O, d5),
                        (Compartment::D, d6),
                    ],
                    p,
                );
            }
        }
    }
    moves
}

fn hospital_moves(v: &StateVector, params: &Parameters) -> Moves {
    let mut moves = Moves::new();
    for d7 in 0..=v.o {
        for d8 in 0..=v.o - d7 {
            let p = zeta(d7, d8, v, params);
            push_move(
                &mut moves,
                Compartment::O,
                &[(Compartment::D, d7), (Compartment::R, d8)],
                p,
            );
        }
    }
    moves
}

fn quarantine_moves(v: &StateVector, params: &Parameters) -> Moves {
    let mut moves = Moves::new();
    for d10 in 0..=v.q {
        for d11 in 0..=v.q - d10 {
            let p = chi(d10, d11, v, params);
            push_move(
                &mut moves,
                Compartment::Q,
                &[(Compartment::I, d10), (Compartment::R, d11)],
                p,
            );
        }
    }
    moves
}

/// Applies one compartment's outcomes to every partial state and merges duplicates.
///
/// Each compartment only loses subjects in its own stage, so subtracting
/// before adding never borrows across packed fields.
fn convolve(partial: Vec<(u64, f64)>, moves: &Moves) -> Vec<(u64, f64)> {
    if moves.len() == 1 && moves[0].0 == 0 && moves[0].1 == 0 {
        return partial
            .into_iter()
            .map(|(k, w)| (k, w * moves[0].2))
            .collect();
    }
    let mut out = Vec::with_capacity(partial.len() * moves.len());
    for &(key, w) in &partial {
        for &(sub, add, p) in moves {
            out.push((key - sub + add, w * p));
        }
    }
    merge_sorted(out)
}

fn merge_sorted(mut entries: Vec<(u64, f64)>) -> Vec<(u64, f64)> {
    entries.sort_by_key(|e| e.0);
    let mut merged: Vec<(u64, f64)> = Vec::with_capacity(entries.len());
    for (k, p) in entries {
        match merged.last_mut() {
            Some(last) if last.0 == k => last.1 += p,
            _ => merged.push((k, p)),
        }
    }
    merged
}

/// Next-state law on packed states, sorted by state, normalized.
///
/// `meetings` is real-valued so that unrounded policy outputs can be evaluated.
pub(crate) fn packed_distribution(
    kind: ModelKind,
    v: &StateVector,
    meetings: f64,
    t: u32,
    params: &Parameters,
) -> Result<Vec<(u64, f64)>> {
    if params.n > MAX_EXACT_POPULATION {
        return Err(ModelError::PopulationTooLarge {
            n: params.n,
            max: MAX_EXACT_POPULATION,
        });
    }
    let stages = match kind {
        ModelKind::Full => [
            infection_moves(v, meetings, params),
            tested_asymptomatic_moves(v, t, params),
            symptomatic_moves(v, params),
            hospital_moves(v, params),
            quarantine_moves(v, params),
        ],
        ModelKind::Simplified => [
            infection_moves(v, meetings, params),
            untested_asymptomatic_moves(v, params),
            symptomatic_moves(v, params),
            hospital_moves(v, params),
            Moves::from([(0, 0, 1.0)]),
        ],
    };
    let mut partial = vec![(v.pack(), 1.0)];
    for moves in &stages {
        partial = convolve(partial, moves);
    }
    partial.retain(|e| e.1 > 0.0);
    normalize(&mut partial, || format!("{kind} model, state {v}, M={meetings}, t={t}"))?;
    Ok(partial)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mass(row: &Row) -> f64 {
        row.iter().map(|e| e.1).sum()
    }

    #[test]
    fn frozen_parameters_self_loop() {
        let p = Parameters::frozen(4, 2);
        let v = StateVector::new(1, 1, 1, 0, 1, 0, 0, 0);
        let row = transition_distribution(&v, &Action::new(2, 1), &p).unwrap();
        assert_eq!(row, vec![(v, 1.0)]);
        assert_eq!(
            transition_probability(&v, &v, &Action::new(2, 1), &p).unwrap(),
            1.0
        );
        let simple = simplified_transition_distribution(&v, &Action::meetings(2), &p).unwrap();
        assert_eq!(simple, vec![(v, 1.0)]);
    }

    #[test]
    fn absorbing_state_self_loop() {
        let p = Parameters::reference(5, 1);
        let v = StateVector::new(2, 0, 0, 1, 0, 1, 0, 1);
        let row = transition_distribution(&v, &Action::meetings(3), &p).unwrap();
        assert_eq!(row, vec![(v, 1.0)]);
    }

    #[test]
    fn susceptibles_never_increase() {
        let p = Parameters::reference(3, 1);
        let v = StateVector::untested(1, 1, 1, 0, 0, 0);
        let back = StateVector::untested(2, 0, 1, 0, 0, 0);
        assert_eq!(
            transition_probability(&v, &back, &Action::meetings(1), &p).unwrap(),
            0.0
        );
    }

    #[test]
    fn pair_route_matches_support() {
        let p = Parameters::reference(4, 1);
        let v = StateVector::new(1, 1, 1, 0, 0, 0, 1, 0);
        let action = Action::new(2, 1);
        let row = transition_distribution(&v, &action, &p).unwrap();
        assert!((mass(&row) - 1.0).abs() < 1e-12);
        for (next, prob) in &row {
            let pair = transition_probability(&v, next, &action, &p).unwrap();
            assert!((pair - prob).abs() < 1e-14, "{next}: {pair} vs {prob}");
        }
    }

    #[test]
    fn simplified_pair_route_matches_support() {
        let p = Parameters::reference(5, 1);
        let v = StateVector::untested(2, 1, 1, 0, 1, 0);
        let row = simplified_transition_distribution(&v, &Action::meetings(2), &p).unwrap();
        assert!((mass(&row) - 1.0).abs() < 1e-12);
        for (next, prob) in &row {
            let pair = simplified_transition_probability(&v, next, 2, &p).unwrap();
            assert!((pair - prob).abs() < 1e-14, "{next}: {pair} vs {prob}");
        }
    }

    #[test]
    fn invalid_inputs_rejected() {
        let p = Parameters::reference(3, 1);
        let wrong_total = StateVector::untested(1, 1, 0, 0, 0, 0);
        assert!(transition_distribution(&wrong_total, &Action::meetings(1), &p).is_err());
        let v = StateVector::untested(2, 1, 0, 0, 0, 0);
        assert!(transition_distribution(&v, &Action::new(1, 4), &p).is_err());
        assert!(simplified_transition_distribution(&v, &Action::new(1, 1), &p).is_err());
        let quarantined = StateVector::new(2, 0, 0, 0, 0, 0, 1, 0);
        assert!(simplified_transition_distribution(&quarantined, &Action::meetings(1), &p).is_err());
    }

    #[test]
    fn normalization_policy() {
        let mut dusty = vec![(0u64, 0.5), (1, 0.5 + 5e-10)];
        normalize(&mut dusty, String::new).unwrap();
        assert!((dusty[0].1 + dusty[1].1 - 1.0).abs() < 1e-15);
        let mut broken = vec![(0u64, 0.5), (1, 0.4)];
        assert!(matches!(
            normalize(&mut broken, String::new),
            Err(ModelError::Normalization { .. })
        ));
    }
}
