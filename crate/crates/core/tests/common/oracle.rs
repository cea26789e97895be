//! Per-subject brute-force oracle for the one-step law.
//!
//! Every subject is labelled and its outcome enumerated explicitly: meeting
//! partner sequences for susceptibles, the tested subset of the testable pool,
//! test results and disease progression. The joint outcome probabilities are
//! products of per-subject probabilities (subjects act independently given the
//! state), and the next state is obtained by counting. Nothing here uses the
//! closed-form kernels of the crate.

use std::collections::BTreeMap;

use sairod::{Parameters, StateVector};

#[derive(Clone, Copy, Debug, PartialEq)]
enum Dest {
    S,
    A,
    I,
    R,
    O,
    D,
    Q,
    Ra,
    /// Symptomatic subject that needs a hospital bed; admitted only if one is free.
    NeedsBed,
}

/// Probability that a susceptible stays healthy after `m` meetings, by
/// enumerating all `2^m` sequences of partner types (infectious or not).
fn stays_healthy(v: &StateVector, m: u32, omega: f64) -> f64 {
    let pool = (v.s + v.a + v.r + v.ra) as f64;
    if pool == 0.0 {
        return 1.0;
    }
    let meet_a = v.a as f64 / pool;
    let mut total = 0.0;
    for mask in 0u32..(1 << m) {
        let mut p = 1.0;
        for j in 0..m {
            if mask & (1 << j) != 0 {
                p *= meet_a * (1.0 - omega);
            } else {
                p *= 1.0 - meet_a;
            }
        }
        total += p;
    }
    total
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize == k {
            out.push((0..n).filter(|&j| mask & (1 << j) != 0).collect());
        }
    }
    out
}

/// Exhaustive next-state law. With `untested`, asymptomatic recoveries are
/// pooled into `R` (the untested model has no `Ra`).
pub fn brute_force(
    v: &StateVector,
    m: u32,
    t: u32,
    p: &Parameters,
    untested: bool,
) -> BTreeMap<StateVector, f64> {
    let healthy = stays_healthy(v, m, p.omega);
    let recovered_a = if untested { Dest::R } else { Dest::Ra };

    // Testable pool: susceptibles, asymptomatic recovered, asymptomatic.
    let pool = (v.s + v.ra + v.a) as usize;
    let first_a = (v.s + v.ra) as usize;
    let tested_sets = subsets(pool, t as usize);
    let subset_weight = 1.0 / tested_sets.len() as f64;

    let mut law: BTreeMap<StateVector, f64> = BTreeMap::new();
    for tested in &tested_sets {
        let mut choices: Vec<Vec<(f64, Dest)>> = Vec::new();
        for _ in 0..v.s {
            choices.push(vec![(1.0 - healthy, Dest::A), (healthy, Dest::S)]);
        }
        for _ in 0..v.ra {
            choices.push(vec![(1.0, Dest::Ra)]);
        }
        for k in 0..v.a as usize {
            let is_tested = tested.contains(&(first_a + k));
            let stay = (1.0 - p.beta - p.delta).max(0.0);
            let progress = [(p.beta, recovered_a), (p.delta, Dest::I), (stay, Dest::A)];
            let mut opts = Vec::new();
            for (q, dest) in progress {
                if is_tested {
                    // Positive subjects are quarantined unless they develop symptoms.
                    let positive_dest = if dest == Dest::I { Dest::I } else { Dest::Q };
                    opts.push((q * p.gamma, positive_dest));
                    opts.push((q * (1.0 - p.gamma), dest));
                } else {
                    opts.push((q, dest));
                }
            }
            choices.push(opts);
        }
        for _ in 0..v.i {
            let stay = (1.0 - p.mu - p.psi - p.alpha).max(0.0);
            choices.push(vec![
                (p.mu, Dest::R),
                (p.psi, Dest::NeedsBed),
                (p.alpha, Dest::D),
                (stay, Dest::I),
            ]);
        }
        for _ in 0..v.o {
            let stay = (1.0 - p.sigma - p.xi).max(0.0);
            choices.push(vec![(p.sigma, Dest::D), (p.xi, Dest::R), (stay, Dest::O)]);
        }
        for _ in 0..v.q {
            let stay = (1.0 - p.iota - p.upsilon).max(0.0);
            choices.push(vec![(p.iota, Dest::I), (p.upsilon, Dest::R), (stay, Dest::Q)]);
        }
        for _ in 0..v.r {
            choices.push(vec![(1.0, Dest::R)]);
        }
        for _ in 0..v.d {
            choices.push(vec![(1.0, Dest::D)]);
        }

        let free_beds = p.c.saturating_sub(v.o);
        let mut odometer = vec![0usize; choices.len()];
        'outcomes: loop {
            let mut prob = subset_weight;
            let mut counts = [0u32; 8];
            let mut need_bed = 0u32;
            for (slot, &pick) in odometer.iter().enumerate() {
                let (q, dest) = choices[slot][pick];
                prob *= q;
                match dest {
                    Dest::S => counts[0] += 1,
                    Dest::A => counts[1] += 1,
                    Dest::I => counts[2] += 1,
                    Dest::R => counts[3] += 1,
                    Dest::O => counts[4] += 1,
                    Dest::D => counts[5] += 1,
                    Dest::Q => counts[6] += 1,
                    Dest::Ra => counts[7] += 1,
                    Dest::NeedsBed => need_bed += 1,
                }
            }
            let admitted = need_bed.min(free_beds);
            counts[4] += admitted;
            counts[2] += need_bed - admitted;
            if prob > 0.0 {
                *law.entry(StateVector::from_array(counts)).or_insert(0.0) += prob;
            }

            // advance the odometer; done with this tested subset when it wraps
            let mut pos = 0;
            loop {
                if pos == odometer.len() {
                    break 'outcomes;
                }
                odometer[pos] += 1;
                if odometer[pos] < choices[pos].len() {
                    break;
                }
                odometer[pos] = 0;
                pos += 1;
            }
        }
    }
    law
}
