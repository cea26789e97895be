//! Binomial and multinomial coefficients, the binomial mass function and
//! integer compositions.
//!
//! Coefficients follow the extended convention used throughout the model:
//! `C(a, b) = 0` whenever `b > a`, `b < 0` or `a < 0`, and `C(0, 0) = 1`.
//! Vanishing terms in the transition sums rely on this.

use std::sync::OnceLock;

use crate::error::{ModelError, Result};

const TABLE_ROWS: usize = 256;
/// Largest row for which every coefficient fits in a `u128`.
const EXACT_ROWS: usize = 129;

fn table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut exact = vec![0u128; EXACT_ROWS];
        let mut out = vec![0.0; TABLE_ROWS * TABLE_ROWS];
        exact[0] = 1;
        for a in 0..TABLE_ROWS {
            if a < EXACT_ROWS {
                if a > 0 {
                    for b in (1..=a).rev() {
                        exact[b] += exact[b - 1];
                    }
                }
                for b in 0..=a {
                    out[a * TABLE_ROWS + b] = exact[b] as f64;
                }
            } else {
                out[a * TABLE_ROWS] = 1.0;
                for b in 1..=a {
                    out[a * TABLE_ROWS + b] =
                        out[(a - 1) * TABLE_ROWS + b - 1] + out[(a - 1) * TABLE_ROWS + b];
                }
            }
        }
        out
    })
}

/// Exact binomial coefficient.
///
/// Panics if the result does not fit in a `u128` (never the case for `a <= 128`).
pub fn binom(a: i64, b: i64) -> u128 {
    if a < 0 || b < 0 || b > a {
        return 0;
    }
    let b = b.min(a - b);
    let mut acc: u128 = 1;
    for i in 0..b {
        // C(a, i+1) = C(a, i) * (a - i) / (i + 1); split the divisor so the
        // intermediate never exceeds the result.
        let num = (a - i) as u128;
        let den = i as u128 + 1;
        let g = gcd(acc, den);
        acc = (acc / g)
            .checked_mul(num / (den / g))
            .unwrap_or_else(|| panic!("binom({a}, {b}) overflows u128"));
    }
    acc
}

fn gcd(mut x: u128, mut y: u128) -> u128 {
    while y != 0 {
        (x, y) = (y, x % y);
    }
    x
}

/// Binomial coefficient in floating point, table-backed for `a < 256`.
#[inline]
pub fn binom_f64(a: i64, b: i64) -> f64 {
    if a < 0 || b < 0 || b > a {
        return 0.0;
    }
    if (a as usize) < TABLE_ROWS {
        return table()[a as usize * TABLE_ROWS + b as usize];
    }
    let b = b.min(a - b);
    (0..b).fold(1.0, |acc, i| acc * (a - i) as f64 / (i + 1) as f64)
}

/// Multinomial coefficient `n! / (p_1! ... p_k! (n - Σp)!)`; the last block is implied.
///
/// Returns 0 when the parts exceed `n`.
pub fn multinom(n: u32, parts: &[u32]) -> u128 {
    let mut remaining = n as i64;
    let mut acc: u128 = 1;
    for &p in parts {
        let c = binom(remaining, p as i64);
        if c == 0 {
            return 0;
        }
        acc = acc
            .checked_mul(c)
            .unwrap_or_else(|| panic!("multinom({n}, {parts:?}) overflows u128"));
        remaining -= p as i64;
    }
    acc
}

/// Multinomial coefficient as a product of binomials, `C(n,p1)·C(n-p1,p2)·…`.
#[inline]
pub fn multinom_f64(n: u32, parts: &[u32]) -> f64 {
    let mut remaining = n as i64;
    let mut acc = 1.0;
    for &p in parts {
        acc *= binom_f64(remaining, p as i64);
        remaining -= p as i64;
    }
    if remaining < 0 {
        0.0
    } else {
        acc
    }
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ModelError::ProbabilityDomain { value: p })
    }
}

/// `C(x, k) p^k (1 - p)^(x - k)`; zero outside `0 <= k <= x`.
pub fn binomial_pmf(x: i64, p: f64, k: i64) -> Result<f64> {
    check_probability(p)?;
    if x < 0 {
        return Err(ModelError::InvalidParameter {
            name: "x",
            reason: format!("trial count must be non-negative, got {x}"),
        });
    }
    Ok(binomial_pmf_unchecked(x as u32, p, k))
}

#[inline]
pub(crate) fn binomial_pmf_unchecked(x: u32, p: f64, k: i64) -> f64 {
    if k < 0 || k > x as i64 {
        return 0.0;
    }
    let k = k as u32;
    binom_f64(x as i64, k as i64) * p.powi(k as i32) * (1.0 - p).powi((x - k) as i32)
}

/// The whole mass function `k = 0..=x` in one pass.
pub(crate) fn binomial_pmf_vec(x: u32, p: f64) -> Vec<f64> {
    (0..=x as i64)
        .map(|k| binomial_pmf_unchecked(x, p, k))
        .collect()
}

/// Weak compositions of `total` into `parts` non-negative parts, in
/// lexicographic order from `(0, ..., 0, total)` to `(total, 0, ..., 0)`.
pub fn compositions(parts: usize, total: u32) -> Compositions {
    let next = match parts {
        0 => (total == 0).then(Vec::new),
        _ => {
            let mut first = vec![0; parts];
            first[parts - 1] = total;
            Some(first)
        }
    };
    Compositions { next }
}

#[derive(Debug, Clone)]
pub struct Compositions {
    next: Option<Vec<u32>>,
}

impl Iterator for Compositions {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut tail = 0;
        for i in (0..succ.len().saturating_sub(1)).rev() {
            tail += succ[i + 1];
            if tail > 0 {
                succ[i] += 1;
                succ[i + 1..].fill(0);
                *succ.last_mut().expect("non-empty") = tail - 1;
                self.next = Some(succ);
                break;
            }
        }
        Some(current)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binom_conventions() {
        assert_eq!(binom(3, 5), 0);
        assert_eq!(binom(0, 0), 1);
        assert_eq!(binom(5, 2), 10);
        assert_eq!(binom(5, -1), 0);
        assert_eq!(binom(-2, 0), 0);
        assert_eq!(binom(128, 64), 23_951_146_041_928_082_866_135_587_776_380_551_750);
    }

    #[test]
    fn float_table_matches_exact() {
        for a in 0..=128i64 {
            for b in 0..=a {
                assert_eq!(binom_f64(a, b), binom(a, b) as f64, "C({a},{b})");
            }
        }
        assert_eq!(binom_f64(3, 5), 0.0);
        assert_eq!(binom_f64(4, -1), 0.0);
        let big = binom_f64(300, 3);
        assert!((big - 4_455_100.0).abs() < 1e-6);
        let row: f64 = (0..=200).map(|b| binom_f64(200, b)).sum();
        assert!((row / 2f64.powi(200) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn multinomial_values() {
        assert_eq!(multinom(2, &[1, 1]), 2);
        assert_eq!(multinom(3, &[3]), 1);
        assert_eq!(multinom(4, &[2, 1]), 12);
        assert_eq!(multinom(2, &[2, 1]), 0);
        assert_eq!(multinom_f64(4, &[2, 1]), 12.0);
        assert_eq!(multinom_f64(2, &[2, 1]), 0.0);
        assert_eq!(multinom(0, &[]), 1);
    }

    #[test]
    fn binomial_pmf_examples() {
        assert_eq!(binomial_pmf(2, 0.5, 1).unwrap(), 0.5);
        assert_eq!(binomial_pmf(3, 0.2, 5).unwrap(), 0.0);
        assert!((binomial_pmf(4, 0.3, 0).unwrap() - 0.2401).abs() < 1e-15);
        assert_eq!(binomial_pmf(0, 0.0, 0).unwrap(), 1.0);
        assert_eq!(binomial_pmf(3, 1.0, 3).unwrap(), 1.0);
    }

    #[test]
    fn binomial_pmf_domain_errors() {
        assert!(binomial_pmf(3, 1.5, 1).is_err());
        assert!(binomial_pmf(3, -0.1, 1).is_err());
        assert!(binomial_pmf(-1, 0.5, 0).is_err());
    }

    #[test]
    fn compositions_in_order() {
        let all: Vec<Vec<u32>> = compositions(3, 2).collect();
        assert_eq!(
            all,
            vec![
                vec![0, 0, 2],
                vec![0, 1, 1],
                vec![0, 2, 0],
                vec![1, 0, 1],
                vec![1, 1, 0],
                vec![2, 0, 0]
            ]
        );
        assert_eq!(compositions(1, 5).collect::<Vec<_>>(), vec![vec![5]]);
        assert_eq!(compositions(0, 0).count(), 1);
        assert_eq!(compositions(0, 3).count(), 0);
        assert_eq!(compositions(4, 0).count(), 1);
    }
}
