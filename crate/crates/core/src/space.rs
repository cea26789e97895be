//! State enumeration, indexing and the sparse `(state, action)` transition table.

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::combinatorics::binom;
use crate::error::{ModelError, Result};
use crate::model::{Action, ModelKind, Parameters, StateVector};
use crate::transition::{packed_distribution, MAX_EXACT_POPULATION};

/// Default ceiling on the number of materialized states.
pub const DEFAULT_STATE_BUDGET: usize = 20_000_000;

/// Number of ways to place `big_n` subjects into `n` compartments, `C(N+n-1, n-1)`.
pub fn state_count(n: u32, big_n: u32) -> u128 {
    if n == 0 {
        return u128::from(big_n == 0);
    }
    binom(big_n as i64 + n as i64 - 1, n as i64 - 1)
}

/// Dense index of a state within a [`StateSpace`].
pub type StateIndex = usize;

/// Canonically ordered set of states with rank/unrank.
///
/// States are kept as packed keys; packed order equals lexicographic order on
/// `(S, A, I, R, O, D, Q, Ra)`, so the index of a state is its position in
/// that order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    kind: ModelKind,
    n: u32,
    c: u32,
    keys: Vec<u64>,
}

impl StateSpace {
    /// Builds a space from arbitrary states; sorts and deduplicates them.
    pub fn from_states(
        kind: ModelKind,
        params: &Parameters,
        states: impl IntoIterator<Item = StateVector>,
    ) -> Result<StateSpace> {
        check_population(params)?;
        let mut keys = Vec::new();
        for v in states {
            validate_for(kind, &v, params)?;
            keys.push(v.pack());
        }
        keys.sort_unstable();
        keys.dedup();
        Ok(StateSpace {
            kind,
            n: params.n,
            c: params.c,
            keys,
        })
    }

    pub(crate) fn from_sorted_keys(kind: ModelKind, params: &Parameters, keys: Vec<u64>) -> Self {
        debug_assert!(keys.windows(2).all(|w| w[0] < w[1]));
        StateSpace {
            kind,
            n: params.n,
            c: params.c,
            keys,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn population(&self) -> u32 {
        self.n
    }

    pub fn capacity(&self) -> u32 {
        self.c
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn rank(&self, v: &StateVector) -> Result<StateIndex> {
        if v.to_array().iter().any(|&x| x > MAX_EXACT_POPULATION) {
            return Err(ModelError::UnknownState(*v));
        }
        self.keys
            .binary_search(&v.pack())
            .map_err(|_| ModelError::UnknownState(*v))
    }

    pub fn unrank(&self, index: StateIndex) -> Result<StateVector> {
        self.keys
            .get(index)
            .map(|&k| StateVector::unpack(k))
            .ok_or(ModelError::IndexOutOfRange {
                index,
                len: self.keys.len(),
            })
    }

    pub fn contains(&self, v: &StateVector) -> bool {
        self.rank(v).is_ok()
    }

    /// The state at `index`; panics when out of range.
    pub fn state(&self, index: StateIndex) -> StateVector {
        StateVector::unpack(self.keys[index])
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = StateVector> + '_ {
        self.keys.iter().map(|&k| StateVector::unpack(k))
    }
}

fn check_population(params: &Parameters) -> Result<()> {
    if params.n > MAX_EXACT_POPULATION {
        return Err(ModelError::PopulationTooLarge {
            n: params.n,
            max: MAX_EXACT_POPULATION,
        });
    }
    Ok(())
}

pub(crate) fn validate_for(kind: ModelKind, v: &StateVector, params: &Parameters) -> Result<()> {
    v.validate(params)?;
    if kind == ModelKind::Simplified && (v.q != 0 || v.ra != 0) {
        return Err(ModelError::InvalidState {
            state: *v,
            reason: "the untested model has no Q or Ra compartment".into(),
        });
    }
    Ok(())
}

/// Every state of the model with `O <= C`, in canonical order.
pub fn enumerate_all(params: &Parameters, kind: ModelKind) -> Result<StateSpace> {
    enumerate_all_with_budget(params, kind, DEFAULT_STATE_BUDGET)
}

pub fn enumerate_all_with_budget(
    params: &Parameters,
    kind: ModelKind,
    budget: usize,
) -> Result<StateSpace> {
    params.validate()?;
    check_population(params)?;
    let dims = match kind {
        ModelKind::Full => 8,
        ModelKind::Simplified => 6,
    };
    let bound = state_count(dims as u32, params.n);
    if bound > budget as u128 {
        // The bound ignores O <= C; count exactly before giving up.
        let exact = (0..=params.c.min(params.n))
            .map(|o| state_count(dims as u32 - 1, params.n - o))
            .sum::<u128>();
        if exact > budget as u128 {
            return Err(ModelError::BudgetExceeded {
                count: exact,
                budget: budget as u128,
            });
        }
    }
    let mut keys = Vec::with_capacity(bound.min(budget as u128) as usize);
    let mut cur = [0u32; 8];
    compositions(0, dims, params.n, params.c, &mut cur, &mut keys);
    Ok(StateSpace::from_sorted_keys(kind, params, keys))
}

fn compositions(k: usize, dims: usize, left: u32, c: u32, cur: &mut [u32; 8], out: &mut Vec<u64>) {
    if k == dims - 1 {
        cur[k] = left;
        if cur[4] <= c {
            out.push(StateVector::from_array(*cur).pack());
        }
        cur[k] = 0;
        return;
    }
    let top = if k == 4 { left.min(c) } else { left };
    for x in 0..=top {
        cur[k] = x;
        compositions(k + 1, dims, left - x, c, cur, out);
    }
    cur[k] = 0;
}

/// Ordered list of candidate actions; the position of an action is its index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSet {
    actions: Vec<Action>,
}

impl ActionSet {
    /// Sorts and deduplicates the actions by `(M, t)`.
    pub fn new(mut actions: Vec<Action>) -> Result<ActionSet> {
        actions.sort_by_key(|a| (a.m, a.t));
        actions.dedup();
        if actions.is_empty() {
            return Err(ModelError::Config("action set is empty".into()));
        }
        Ok(ActionSet { actions })
    }

    /// `M` in `lo..=hi`, no tests.
    pub fn meetings(lo: u32, hi: u32) -> Result<ActionSet> {
        ActionSet::new((lo..=hi).map(Action::meetings).collect())
    }

    pub fn single(action: Action) -> ActionSet {
        ActionSet {
            actions: vec![action],
        }
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn index_of(&self, action: &Action) -> Option<usize> {
        self.actions.iter().position(|a| a == action)
    }

    /// Actions admissible in `v` (`t <= A + S + Ra`) with their indices.
    pub fn admissible<'a>(
        &'a self,
        v: &'a StateVector,
    ) -> impl Iterator<Item = (usize, Action)> + 'a {
        self.actions
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, a)| a.is_admissible(v))
    }
}

/// Sparse `(state, action) -> [(next state, probability)]` table in CSR form.
///
/// Inadmissible pairs have empty rows; admissible rows are never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable {
    actions: ActionSet,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    probs: Vec<f64>,
}

impl TransitionTable {
    pub fn action_set(&self) -> &ActionSet {
        &self.actions
    }

    pub fn num_states(&self) -> usize {
        (self.offsets.len() - 1) / self.actions.len()
    }

    pub fn nnz(&self) -> usize {
        self.targets.len()
    }

    /// Row of `(state, action index)`, or `None` if the action is inadmissible there.
    pub fn row(&self, state: StateIndex, action: usize) -> Option<(&[u32], &[f64])> {
        let slot = state * self.actions.len() + action;
        let (lo, hi) = (self.offsets[slot], self.offsets[slot + 1]);
        (hi > lo).then(|| (&self.targets[lo..hi], &self.probs[lo..hi]))
    }
}

/// Row of one choice slot, targets given as discovery indices.
type RawRow = (Box<[u32]>, Box<[f64]>);
/// A transition law over packed successor keys, before ranking.
type PackedRow = Vec<(u64, f64)>;

/// Explored closure in discovery order.
pub(crate) struct Closure {
    /// Packed states in discovery order.
    order: Vec<u64>,
    /// Per discovered state, one optional row per choice slot.
    rows: Vec<Vec<Option<RawRow>>>,
}

/// Canonical CSR form of a closure: one row slot per `(state, choice)`.
pub(crate) struct Csr {
    pub keys: Vec<u64>,
    pub offsets: Vec<usize>,
    pub targets: Vec<u32>,
    pub probs: Vec<f64>,
}

impl Closure {
    /// Sorts states canonically and relabels every row; rows are consumed as
    /// they are copied so that the peak footprint stays close to one table.
    pub fn into_csr(self) -> Csr {
        let Closure { order, rows } = self;
        let mut perm: Vec<u32> = (0..order.len() as u32).collect();
        perm.sort_unstable_by_key(|&i| order[i as usize]);
        let mut rank = vec![0u32; order.len()];
        for (r, &i) in perm.iter().enumerate() {
            rank[i as usize] = r as u32;
        }
        let keys: Vec<u64> = perm.iter().map(|&i| order[i as usize]).collect();
        drop(order);
        let slots = rows.first().map_or(0, Vec::len);
        let nnz: usize = rows
            .iter()
            .flatten()
            .flatten()
            .map(|r| r.0.len())
            .sum();
        let mut offsets = Vec::with_capacity(keys.len() * slots + 1);
        let mut targets = Vec::with_capacity(nnz);
        let mut probs = Vec::with_capacity(nnz);
        offsets.push(0);
        let mut rows: Vec<Option<Vec<Option<RawRow>>>> = rows.into_iter().map(Some).collect();
        let mut buf: Vec<(u32, f64)> = Vec::new();
        for &i in &perm {
            let state_rows = rows[i as usize].take().expect("each state is visited once");
            for slot in state_rows {
                if let Some((dst, p)) = slot {
                    buf.clear();
                    buf.extend(dst.iter().map(|&d| rank[d as usize]).zip(p.iter().copied()));
                    buf.sort_unstable_by_key(|e| e.0);
                    targets.extend(buf.iter().map(|e| e.0));
                    probs.extend(buf.iter().map(|e| e.1));
                }
                offsets.push(targets.len());
            }
        }
        Csr {
            keys,
            offsets,
            targets,
            probs,
        }
    }
}

/// Breadth-first closure of `initial` under the rows produced by `choices`.
///
/// `choices(v)` lists, for each choice slot, `Some((meetings, tests))` or
/// `None` when the slot is unavailable in `v`; every state must return the
/// same number of slots. Rows are computed in parallel per frontier and
/// gathered in frontier order, so discovery order, and hence the canonical
/// output, does not depend on the schedule.
pub(crate) fn explore<F>(
    initial: &[StateVector],
    kind: ModelKind,
    params: &Parameters,
    budget: usize,
    choices: F,
) -> Result<Closure>
where
    F: Fn(&StateVector) -> Result<Vec<Option<(f64, u32)>>> + Sync,
{
    params.validate()?;
    check_population(params)?;
    if initial.is_empty() {
        return Err(ModelError::EmptyModel("no initial states".into()));
    }
    let mut seen: FxHashMap<u64, u32> = FxHashMap::default();
    let mut order: Vec<u64> = Vec::new();
    for v in initial {
        validate_for(kind, v, params)?;
        let key = v.pack();
        if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(key) {
            e.insert(order.len() as u32);
            order.push(key);
        }
    }
    let mut rows: Vec<Vec<Option<RawRow>>> = Vec::new();
    let mut done = 0;
    while done < order.len() {
        let frontier = &order[done..];
        let computed: Vec<Vec<Option<PackedRow>>> = frontier
            .par_iter()
            .map(|&key| {
                let v = StateVector::unpack(key);
                choices(&v)?
                    .into_iter()
                    .map(|c| {
                        c.map(|(m, t)| packed_distribution(kind, &v, m, t, params))
                            .transpose()
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        done = order.len();
        for state_rows in computed {
            let mut slots = Vec::with_capacity(state_rows.len());
            for row in state_rows {
                let Some(row) = row else {
                    slots.push(None);
                    continue;
                };
                let mut dst = Vec::with_capacity(row.len());
                let mut p = Vec::with_capacity(row.len());
                for (key, prob) in row {
                    let idx = match seen.get(&key) {
                        Some(&idx) => idx,
                        None => {
                            if order.len() >= budget {
                                return Err(ModelError::BudgetExceeded {
                                    count: order.len() as u128 + 1,
                                    budget: budget as u128,
                                });
                            }
                            let idx = order.len() as u32;
                            seen.insert(key, idx);
                            order.push(key);
                            idx
                        }
                    };
                    dst.push(idx);
                    p.push(prob);
                }
                slots.push(Some((dst.into_boxed_slice(), p.into_boxed_slice())));
            }
            rows.push(slots);
        }
    }
    Ok(Closure { order, rows })
}

/// Reachable states from `initial` under every admissible action, with the full table.
pub fn build_reachable(
    initial: &[StateVector],
    actions: &ActionSet,
    params: &Parameters,
    kind: ModelKind,
) -> Result<(StateSpace, TransitionTable)> {
    build_reachable_with_budget(initial, actions, params, kind, DEFAULT_STATE_BUDGET)
}

pub fn build_reachable_with_budget(
    initial: &[StateVector],
    actions: &ActionSet,
    params: &Parameters,
    kind: ModelKind,
    budget: usize,
) -> Result<(StateSpace, TransitionTable)> {
    if kind == ModelKind::Simplified && actions.actions().iter().any(|a| a.t != 0) {
        return Err(ModelError::Config(
            "the untested model only accepts actions with t = 0".into(),
        ));
    }
    let closure = explore(initial, kind, params, budget, |v| {
        let mut out = vec![None; actions.len()];
        let mut any = false;
        for (idx, a) in actions.admissible(v) {
            out[idx] = Some((a.m as f64, a.t));
            any = true;
        }
        if any {
            Ok(out)
        } else {
            Err(ModelError::InvalidPolicy(format!(
                "no admissible action in state {v}"
            )))
        }
    })?;
    let csr = closure.into_csr();
    let space = StateSpace::from_sorted_keys(kind, params, csr.keys);
    let table = TransitionTable {
        actions: actions.clone(),
        offsets: csr.offsets,
        targets: csr.targets,
        probs: csr.probs,
    };
    Ok((space, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_formula() {
        assert_eq!(state_count(1, 7), 1);
        assert_eq!(state_count(3, 4), 15);
        assert_eq!(state_count(6, 20), 53130);
    }

    #[test]
    fn enumeration_order_and_capacity() {
        let p = Parameters::reference(1, 1);
        let s = enumerate_all(&p, ModelKind::Full).unwrap();
        assert_eq!(s.len(), 8);
        let states: Vec<_> = s.iter().collect();
        let mut sorted = states.clone();
        sorted.sort();
        assert_eq!(states, sorted);
        let p = Parameters::reference(2, 0);
        let s = enumerate_all(&p, ModelKind::Full).unwrap();
        assert!(s.iter().all(|v| v.o == 0));
        assert_eq!(s.len() as u128, state_count(7, 2));
    }

    #[test]
    fn budget_guard() {
        let p = Parameters::reference(30, 30);
        let err = enumerate_all_with_budget(&p, ModelKind::Full, 1000).unwrap_err();
        assert!(matches!(err, ModelError::BudgetExceeded { .. }));
    }

    #[test]
    fn rank_unrank() {
        let p = Parameters::reference(3, 1);
        let s = enumerate_all(&p, ModelKind::Simplified).unwrap();
        for (i, v) in s.iter().enumerate() {
            assert_eq!(s.rank(&v).unwrap(), i);
            assert_eq!(s.unrank(i).unwrap(), v);
        }
        assert!(s.rank(&StateVector::untested(9, 0, 0, 0, 0, 0)).is_err());
        assert!(s.unrank(s.len()).is_err());
    }

    #[test]
    fn absorbing_initial_state_is_closed() {
        let p = Parameters::reference(4, 1);
        let v = StateVector::untested(2, 0, 0, 1, 0, 1);
        let actions = ActionSet::meetings(1, 3).unwrap();
        let (space, table) = build_reachable(&[v], &actions, &p, ModelKind::Simplified).unwrap();
        assert_eq!(space.len(), 1);
        for a in 0..3 {
            assert_eq!(table.row(0, a).unwrap(), (&[0u32][..], &[1.0][..]));
        }
    }

    #[test]
    fn inadmissible_actions_have_no_row() {
        let p = Parameters::reference(2, 1);
        let v = StateVector::new(0, 0, 1, 1, 0, 0, 0, 0);
        let actions = ActionSet::new(vec![Action::new(1, 0), Action::new(1, 1)]).unwrap();
        let (space, table) = build_reachable(&[v], &actions, &p, ModelKind::Full).unwrap();
        let i = space.rank(&v).unwrap();
        assert!(table.row(i, 0).is_some());
        assert!(table.row(i, 1).is_none());
    }
}
