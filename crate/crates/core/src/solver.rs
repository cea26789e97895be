//! Transient and limiting analysis of a policy-induced chain.
//!
//! Besides plain power iteration this module offers an exact limit and exact
//! reachability probabilities. Both use the strongly connected components of
//! the chain graph: when every component is a single state (possibly with a
//! self-loop), which holds for the epidemic model because the tuple
//! `(S, A, Q, I, O)` never increases and is unchanged only on self-loops,
//! one sweep in topological order is exact. Chains with larger components
//! fall back to iteration.

use std::collections::VecDeque;

use petgraph::algo::tarjan_scc;
use petgraph::visit::{GraphBase, GraphRef, IntoNeighbors, IntoNodeIdentifiers, NodeIndexable};

use crate::error::{ModelError, Result};
use crate::model::{Compartment, StateVector};
use crate::policy::{Dtmc, Policy};
use crate::space::StateSpace;
use crate::transition::NORMALIZATION_TOLERANCE;

pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;

/// Dense probability vector over the states of a space.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    p: Vec<f64>,
}

impl Distribution {
    pub fn point(len: usize, index: usize) -> Result<Distribution> {
        if index >= len {
            return Err(ModelError::IndexOutOfRange { index, len });
        }
        let mut p = vec![0.0; len];
        p[index] = 1.0;
        Ok(Distribution { p })
    }

    /// Checks non-negativity and unit mass.
    pub fn from_vec(p: Vec<f64>) -> Result<Distribution> {
        if let Some(&x) = p.iter().find(|x| !(**x >= 0.0)) {
            return Err(ModelError::ProbabilityDomain { value: x });
        }
        let mass: f64 = p.iter().sum();
        if (mass - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(ModelError::Normalization {
                mass,
                deviation: (mass - 1.0).abs(),
                context: " (initial distribution)".into(),
            });
        }
        Ok(Distribution { p })
    }

    /// Weighted mixture of states; weights must sum to 1.
    pub fn from_weights(space: &StateSpace, weights: &[(StateVector, f64)]) -> Result<Distribution> {
        let mut p = vec![0.0; space.len()];
        for (v, w) in weights {
            p[space.rank(v)?] += w;
        }
        Distribution::from_vec(p)
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn mass(&self) -> f64 {
        self.p.iter().sum()
    }

    pub fn l1_distance(&self, other: &Distribution) -> f64 {
        self.p
            .iter()
            .zip(&other.p)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

fn check_dims(dtmc: &Dtmc, dist: &Distribution) -> Result<()> {
    if dist.len() != dtmc.num_states() {
        return Err(ModelError::DimensionMismatch {
            expected: dtmc.num_states(),
            actual: dist.len(),
        });
    }
    Ok(())
}

fn step_into(dtmc: &Dtmc, from: &[f64], to: &mut [f64]) {
    to.fill(0.0);
    for (i, &x) in from.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let (dst, p) = dtmc.row(i);
        for (&j, &q) in dst.iter().zip(p) {
            to[j as usize] += x * q;
        }
    }
}

fn check_mass(p: &[f64], k: usize) -> Result<()> {
    let mass: f64 = p.iter().sum();
    if (mass - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(ModelError::Normalization {
            mass,
            deviation: (mass - 1.0).abs(),
            context: format!(" (distribution after step {k})"),
        });
    }
    Ok(())
}

/// One synchronous step, `dist * P`.
pub fn step(dtmc: &Dtmc, dist: &Distribution) -> Result<Distribution> {
    check_dims(dtmc, dist)?;
    let mut next = vec![0.0; dist.len()];
    step_into(dtmc, &dist.p, &mut next);
    check_mass(&next, 1)?;
    Ok(Distribution { p: next })
}

/// Calls `observe(k, dist_k)` for `k = 0..=steps`.
pub fn evolve<F>(dtmc: &Dtmc, dist0: &Distribution, steps: usize, mut observe: F) -> Result<Distribution>
where
    F: FnMut(usize, &Distribution),
{
    check_dims(dtmc, dist0)?;
    let mut cur = dist0.clone();
    let mut next = Distribution {
        p: vec![0.0; cur.len()],
    };
    observe(0, &cur);
    for k in 1..=steps {
        step_into(dtmc, &cur.p, &mut next.p);
        check_mass(&next.p, k)?;
        std::mem::swap(&mut cur, &mut next);
        observe(k, &cur);
    }
    Ok(cur)
}

/// Outcome of power iteration.
#[derive(Debug, Clone)]
pub struct Convergence {
    pub distribution: Distribution,
    /// Steps taken; 0 when `dist0` is already a fixed point.
    pub iterations: usize,
    pub converged: bool,
    /// L1 change of the last step.
    pub delta: f64,
}

/// Iterates `step` until the L1 change drops below `tol` or `max_iter` steps are spent.
///
/// The iteration count is the number of steps that changed the distribution
/// by at least `tol`. Non-convergence is reported through the result, not as
/// an error.
pub fn converge(dtmc: &Dtmc, dist0: &Distribution, tol: f64, max_iter: usize) -> Result<Convergence> {
    check_dims(dtmc, dist0)?;
    if !(tol > 0.0) {
        return Err(ModelError::Config(format!("tolerance must be positive, got {tol}")));
    }
    let mut cur = dist0.p.clone();
    let mut next = vec![0.0; cur.len()];
    let mut delta = f64::INFINITY;
    let mut iterations = 0;
    while iterations <= max_iter {
        step_into(dtmc, &cur, &mut next);
        check_mass(&next, iterations + 1)?;
        delta = cur.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        if delta < tol {
            break;
        }
        std::mem::swap(&mut cur, &mut next);
        iterations += 1;
    }
    let converged = delta < tol;
    let iterations = iterations.min(max_iter);
    Ok(Convergence {
        distribution: Distribution { p: cur },
        iterations,
        converged,
        delta,
    })
}

/// Total mass on states satisfying `pred`.
pub fn query_probability<F>(space: &StateSpace, dist: &Distribution, pred: F) -> f64
where
    F: Fn(&StateVector) -> bool,
{
    space
        .iter()
        .zip(&dist.p)
        .filter(|(v, _)| pred(v))
        .map(|(_, &x)| x)
        .sum()
}

/// `F(x) = Pr{X <= x}` for `x = 0..=N` of one compartment.
pub fn marginal_cdf(space: &StateSpace, dist: &Distribution, compartment: Compartment) -> Vec<f64> {
    let n = space.population() as usize;
    let mut pmf = vec![0.0; n + 1];
    for (v, &x) in space.iter().zip(&dist.p) {
        pmf[v.get(compartment) as usize] += x;
    }
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = pmf
        .into_iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect();
    // Pin the top to exactly 1; the mass check bounds the dust.
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    cdf
}

/// Average meeting count `Σ M(v) Pr{v}`.
pub fn expected_action(space: &StateSpace, dist: &Distribution, policy: &Policy) -> Result<f64> {
    let n = space.population();
    let mut acc = 0.0;
    for (v, &x) in space.iter().zip(&dist.p) {
        if x > 0.0 {
            acc += x * policy.meetings(&v, n)?;
        }
    }
    Ok(acc)
}

/// Borrowed view of the chain's transition graph for petgraph algorithms.
#[derive(Clone, Copy)]
struct ChainGraph<'a>(&'a Dtmc);

impl GraphBase for ChainGraph<'_> {
    type NodeId = usize;
    type EdgeId = (usize, usize);
}

impl GraphRef for ChainGraph<'_> {}

impl NodeIndexable for ChainGraph<'_> {
    fn node_bound(&self) -> usize {
        self.0.num_states()
    }
    fn to_index(&self, a: usize) -> usize {
        a
    }
    fn from_index(&self, i: usize) -> usize {
        i
    }
}

impl<'a> IntoNeighbors for ChainGraph<'a> {
    type Neighbors = std::iter::Map<std::iter::Copied<std::slice::Iter<'a, u32>>, fn(u32) -> usize>;
    fn neighbors(self, a: usize) -> Self::Neighbors {
        let widen: fn(u32) -> usize = |j| j as usize;
        self.0.row(a).0.iter().copied().map(widen)
    }
}

impl IntoNodeIdentifiers for ChainGraph<'_> {
    type NodeIdentifiers = std::ops::Range<usize>;
    fn node_identifiers(self) -> Self::NodeIdentifiers {
        0..self.0.num_states()
    }
}

/// Strongly connected components, sinks first (reverse topological order).
pub fn components(dtmc: &Dtmc) -> Vec<Vec<usize>> {
    tarjan_scc(ChainGraph(dtmc))
}

/// Reverse topological order if every component is a single state.
fn acyclic_order(dtmc: &Dtmc) -> Option<Vec<usize>> {
    let sccs = components(dtmc);
    if sccs.iter().all(|c| c.len() == 1) {
        Some(sccs.into_iter().map(|c| c[0]).collect())
    } else {
        None
    }
}

/// Self-loop probability and total outgoing probability of a row.
fn split_row(dtmc: &Dtmc, i: usize) -> (f64, f64) {
    let (dst, p) = dtmc.row(i);
    let mut stay = 0.0;
    let mut leave = 0.0;
    for (&j, &q) in dst.iter().zip(p) {
        if j as usize == i {
            stay += q;
        } else {
            leave += q;
        }
    }
    (stay, leave)
}

/// `lim_k dist0 * P^k`.
///
/// Exact single sweep for chains whose only cycles are self-loops; mass
/// entering a transient state is redistributed over its other successors
/// in proportion to their probabilities. Otherwise power iteration at
/// tolerance `1e-13` is used and non-convergence is an error.
pub fn limit_distribution(dtmc: &Dtmc, dist0: &Distribution) -> Result<Distribution> {
    check_dims(dtmc, dist0)?;
    let Some(order) = acyclic_order(dtmc) else {
        let c = converge(dtmc, dist0, 1e-13, 1_000_000)?;
        if !c.converged {
            return Err(ModelError::Normalization {
                mass: c.distribution.mass(),
                deviation: c.delta,
                context: " (power iteration did not converge)".into(),
            });
        }
        return Ok(c.distribution);
    };
    let mut x = dist0.p.clone();
    for &i in order.iter().rev() {
        let m = x[i];
        if m == 0.0 {
            continue;
        }
        let (_, leave) = split_row(dtmc, i);
        if leave == 0.0 {
            continue;
        }
        x[i] = 0.0;
        let (dst, p) = dtmc.row(i);
        for (&j, &q) in dst.iter().zip(p) {
            if j as usize != i {
                x[j as usize] += m * q / leave;
            }
        }
    }
    check_mass(&x, usize::MAX)?;
    Ok(Distribution { p: x })
}

/// Predecessor lists in CSR form.
fn predecessors(dtmc: &Dtmc) -> (Vec<usize>, Vec<u32>) {
    let n = dtmc.num_states();
    let mut count = vec![0usize; n + 1];
    for i in 0..n {
        for &j in dtmc.row(i).0 {
            count[j as usize + 1] += 1;
        }
    }
    for k in 0..n {
        count[k + 1] += count[k];
    }
    let mut fill = count.clone();
    let mut src = vec![0u32; count[n]];
    for i in 0..n {
        for &j in dtmc.row(i).0 {
            src[fill[j as usize]] = i as u32;
            fill[j as usize] += 1;
        }
    }
    (count, src)
}

/// States that reach a seed state through states allowed by `through`.
fn backward_closure(
    preds: &(Vec<usize>, Vec<u32>),
    seeds: &[bool],
    through: impl Fn(usize) -> bool,
) -> Vec<bool> {
    let (offsets, src) = preds;
    let mut mark = seeds.to_vec();
    let mut queue: VecDeque<usize> = (0..seeds.len()).filter(|&i| seeds[i]).collect();
    while let Some(j) = queue.pop_front() {
        for &i in &src[offsets[j]..offsets[j + 1]] {
            let i = i as usize;
            if !mark[i] && through(i) {
                mark[i] = true;
                queue.push_back(i);
            }
        }
    }
    mark
}

/// Graph-based classification of `Pr{F target}`: `(prob0, prob1)` state sets.
pub fn reach_qualitative(dtmc: &Dtmc, target: &[bool]) -> Result<(Vec<bool>, Vec<bool>)> {
    if target.len() != dtmc.num_states() {
        return Err(ModelError::DimensionMismatch {
            expected: dtmc.num_states(),
            actual: target.len(),
        });
    }
    let preds = predecessors(dtmc);
    let can_reach = backward_closure(&preds, target, |_| true);
    let prob0: Vec<bool> = can_reach.iter().map(|&r| !r).collect();
    let may_fail = backward_closure(&preds, &prob0, |i| !target[i]);
    let prob1 = may_fail.iter().map(|&f| !f).collect();
    Ok((prob0, prob1))
}

/// `Pr{F target}` from every state.
pub fn reach_probabilities(dtmc: &Dtmc, target: &[bool]) -> Result<Vec<f64>> {
    let (prob0, prob1) = reach_qualitative(dtmc, target)?;
    let n = dtmc.num_states();
    let mut x: Vec<f64> = (0..n).map(|i| if prob1[i] { 1.0 } else { 0.0 }).collect();
    let undecided = |i: usize| !prob0[i] && !prob1[i];
    if let Some(order) = acyclic_order(dtmc) {
        for &i in &order {
            if !undecided(i) {
                continue;
            }
            let (_, leave) = split_row(dtmc, i);
            let (dst, p) = dtmc.row(i);
            let acc: f64 = dst
                .iter()
                .zip(p)
                .filter(|(&j, _)| j as usize != i)
                .map(|(&j, &q)| q * x[j as usize])
                .sum();
            x[i] = if leave > 0.0 { acc / leave } else { 0.0 };
        }
        return Ok(x);
    }
    for _ in 0..1_000_000 {
        let mut change: f64 = 0.0;
        for i in (0..n).filter(|&i| undecided(i)) {
            let (dst, p) = dtmc.row(i);
            let v: f64 = dst.iter().zip(p).map(|(&j, &q)| q * x[j as usize]).sum();
            change = change.max((v - x[i]).abs());
            x[i] = v;
        }
        if change < 1e-14 {
            return Ok(x);
        }
    }
    Err(ModelError::Normalization {
        mass: f64::NAN,
        deviation: f64::NAN,
        context: " (reachability iteration did not converge)".into(),
    })
}

/// Bottom strongly connected components (no edge leaves them).
pub fn bottom_components(dtmc: &Dtmc) -> Vec<Vec<usize>> {
    let sccs = components(dtmc);
    let mut comp = vec![0usize; dtmc.num_states()];
    for (c, members) in sccs.iter().enumerate() {
        for &i in members {
            comp[i] = c;
        }
    }
    sccs.iter()
        .enumerate()
        .filter(|(c, members)| {
            members
                .iter()
                .all(|&i| dtmc.row(i).0.iter().all(|&j| comp[j as usize] == *c))
        })
        .map(|(_, m)| m.clone())
        .collect()
}

/// `Pr{G F phi}`: the probability of ending in a bottom component that contains a `phi` state.
pub fn recurrence_probabilities(dtmc: &Dtmc, phi: &[bool]) -> Result<Vec<f64>> {
    if phi.len() != dtmc.num_states() {
        return Err(ModelError::DimensionMismatch {
            expected: dtmc.num_states(),
            actual: phi.len(),
        });
    }
    let mut accepting = vec![false; dtmc.num_states()];
    for members in bottom_components(dtmc) {
        if members.iter().any(|&i| phi[i]) {
            for i in members {
                accepting[i] = true;
            }
        }
    }
    reach_probabilities(dtmc, &accepting)
}

/// Evaluates `pred` on every state of the space.
pub fn state_mask<F>(space: &StateSpace, pred: F) -> Vec<bool>
where
    F: Fn(&StateVector) -> bool,
{
    space.iter().map(|v| pred(&v)).collect()
}
