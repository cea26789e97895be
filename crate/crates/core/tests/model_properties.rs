mod common;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sairod::combinatorics::compositions;
use sairod::{
    enumerate_all, sample_transition, simplified_transition_distribution, state_count,
    transition_distribution, Action, ModelKind, Parameters, StateVector,
};

/// Pascal's triangle, independent of the library's coefficient tables.
fn pascal(a: usize, b: usize) -> u128 {
    let mut row = vec![1u128];
    for _ in 0..a {
        let mut next = vec![1u128; row.len() + 1];
        for k in 1..row.len() {
            next[k] = row[k - 1] + row[k];
        }
        row = next;
    }
    row.get(b).copied().unwrap_or(0)
}

#[test]
fn state_counts_follow_stars_and_bars() {
    for parts in 1..=8usize {
        for n in 0..=12u32 {
            let expected = pascal(n as usize + parts - 1, parts - 1);
            assert_eq!(state_count(parts as u32, n), expected, "n={parts} N={n}");
            let listed: Vec<Vec<u32>> = compositions(parts, n).collect();
            assert_eq!(listed.len() as u128, expected);
            assert!(listed.windows(2).all(|w| w[0] < w[1]));
            assert!(listed.iter().all(|c| c.iter().sum::<u32>() == n));
        }
    }
    for n in 1..=12u32 {
        let params = Parameters::reference(n, n);
        assert_eq!(enumerate_all(&params, ModelKind::Full).unwrap().len() as u128, pascal(n as usize + 7, 7));
        assert_eq!(
            enumerate_all(&params, ModelKind::Simplified).unwrap().len() as u128,
            pascal(n as usize + 5, 5)
        );
    }
}

#[test]
fn untested_full_model_merges_to_simplified() {
    for n in 1..=4 {
        for c in 0..=n {
            for params in [Parameters::reference(n, c), common::generic_parameters(n, c)] {
                for v in common::states(n, c, false).into_iter().filter(|v| v.q == 0) {
                    for m in 1..=3 {
                        let full = transition_distribution(&v, &Action::meetings(m), &params).unwrap();
                        let mut merged: BTreeMap<StateVector, f64> = BTreeMap::new();
                        for (w, p) in full {
                            *merged.entry(w.merge_recovered()).or_default() += p;
                        }
                        let simple = simplified_transition_distribution(
                            &v.merge_recovered(),
                            &Action::meetings(m),
                            &params,
                        )
                        .unwrap();
                        assert_eq!(merged.len(), simple.len(), "{v} M={m}");
                        for (w, p) in simple {
                            let q = merged[&w];
                            assert!((p - q).abs() <= 1e-12, "{v} -> {w}: {p} vs {q}");
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn sampler_matches_exact_law() {
    const DRAWS: usize = 1_000_000;
    let params = Parameters::reference(5, 2);
    let v = StateVector::new(1, 1, 1, 0, 1, 0, 1, 0);
    let action = Action::new(2, 1);
    let exact = transition_distribution(&v, &action, &params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut counts: BTreeMap<StateVector, usize> = BTreeMap::new();
    for _ in 0..DRAWS {
        let w = sample_transition(ModelKind::Full, &v, &action, &params, &mut rng).unwrap();
        *counts.entry(w).or_default() += 1;
    }
    let support: BTreeMap<StateVector, f64> = exact.into_iter().collect();
    for w in counts.keys() {
        assert!(support.contains_key(w), "sampled {w} outside the support");
    }
    for (w, p) in &support {
        let k = counts.get(w).copied().unwrap_or(0) as f64;
        let mean = DRAWS as f64 * p;
        let sd = (DRAWS as f64 * p * (1.0 - p)).sqrt();
        assert!((k - mean).abs() <= 4.0 * sd.max(0.25), "{w}: {k} draws, expected {mean} ± {sd}");
    }
}
