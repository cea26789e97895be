#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;

use sairod::{Parameters, Row, StateVector};

/// A parameter vector with every residual strictly positive.
pub fn generic_parameters(n: u32, c: u32) -> Parameters {
    Parameters {
        n,
        c,
        omega: 0.37,
        beta: 0.31,
        delta: 0.22,
        mu: 0.27,
        alpha: 0.13,
        sigma: 0.17,
        xi: 0.41,
        gamma: 0.73,
        psi: 0.29,
        iota: 0.23,
        upsilon: 0.34,
    }
}

/// Largest absolute difference between a computed row and an oracle law.
pub fn max_abs_diff(row: &Row, law: &BTreeMap<StateVector, f64>) -> f64 {
    let mut keys: Vec<StateVector> = law.keys().copied().collect();
    keys.extend(row.iter().map(|e| e.0));
    keys.sort();
    keys.dedup();
    let lookup = |s: &StateVector| {
        row.iter()
            .find(|e| e.0 == *s)
            .map(|e| e.1)
            .unwrap_or(0.0)
    };
    keys.iter()
        .map(|k| (lookup(k) - law.get(k).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}

/// Every state of population `n` with `O <= c`, optionally restricted to `Q = Ra = 0`.
pub fn states(n: u32, c: u32, untested: bool) -> Vec<StateVector> {
    let dims = if untested { 6 } else { 8 };
    let mut out = Vec::new();
    let mut cur = [0u32; 8];
    fn rec(k: usize, dims: usize, left: u32, c: u32, cur: &mut [u32; 8], out: &mut Vec<StateVector>) {
        if k == dims - 1 {
            cur[k] = left;
            if cur[4] <= c {
                out.push(StateVector::from_array(*cur));
            }
            cur[k] = 0;
            return;
        }
        for x in 0..=left {
            cur[k] = x;
            rec(k + 1, dims, left - x, c, cur, out);
        }
        cur[k] = 0;
    }
    rec(0, dims, n, c, &mut cur, &mut out);
    out
}
