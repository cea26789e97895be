//! Closed-form probabilities of the per-compartment moves in one step.
//!
//! Each kernel is the joint law of the outflows of one compartment given the
//! current state. Subjects move independently, so every kernel is a
//! multinomial law (with capacity folding for hospital admissions and a
//! hypergeometric layer for testing).

use crate::combinatorics::{binom_f64, binomial_pmf_unchecked, multinom_f64};
use crate::error::Result;
use crate::model::{Parameters, StateVector};

/// Probability that one susceptible subject is infected during a step with `m` meetings.
///
/// `1 - (1 - ω A / (N - D - I - O - Q))^m`, meetings drawn uniformly from the
/// meeting pool. An empty pool implies `A = 0` and gives 0.
pub fn infection_probability(v: &StateVector, m: u32, params: &Parameters) -> f64 {
    infection_probability_real(v, m as f64, params)
}

/// Same as [`infection_probability`] with a real-valued meeting count.
pub fn infection_probability_real(v: &StateVector, m: f64, params: &Parameters) -> f64 {
    let pool = v.meeting_pool();
    if v.a == 0 || m <= 0.0 || pool == 0 {
        return 0.0;
    }
    let stay_healthy = 1.0 - params.omega * v.a as f64 / pool as f64;
    1.0 - stay_healthy.powf(m)
}

/// Law of the number `H` of positive tests when `t` tests are spread uniformly
/// over the pool `A + S + Ra`; entry `H` for `H = 0..=t`.
pub fn positive_test_pmf(v: &StateVector, t: u32, params: &Parameters) -> Result<Vec<f64>> {
    crate::model::Action::new(0, t).check_admissible(v)?;
    Ok(positive_test_pmf_unchecked(v, t, params.gamma))
}

pub(crate) fn positive_test_pmf_unchecked(v: &StateVector, t: u32, gamma: f64) -> Vec<f64> {
    let pool = v.test_pool() as i64;
    let clean = (v.s + v.ra) as i64;
    let t_ = t as i64;
    let norm = binom_f64(pool, t_);
    let mut pmf = vec![0.0; t as usize + 1];
    for p in 0..=t_.min(v.a as i64) {
        let ways = binom_f64(clean, t_ - p) * binom_f64(v.a as i64, p);
        if ways == 0.0 {
            continue;
        }
        let tested_infectious = ways / norm;
        for (h, slot) in pmf.iter_mut().enumerate().take(p as usize + 1) {
            *slot += tested_infectious * binomial_pmf_unchecked(p as u32, gamma, h as i64);
        }
    }
    pmf
}

/// Exactly `d3` asymptomatic subjects recover and `d2` develop symptoms.
pub fn rho(d2: u32, d3: u32, v: &StateVector, params: &Parameters) -> f64 {
    if d2 + d3 > v.a {
        return 0.0;
    }
    multinom_f64(v.a, &[d2, d3])
        * params.beta.powi(d3 as i32)
        * params.delta.powi(d2 as i32)
        * params.stay_asymptomatic().powi((v.a - d2 - d3) as i32)
}

/// Outcome law of the asymptomatic compartment under testing.
///
/// `d2` subjects develop symptoms (tested or not), `d3` recover without a
/// positive test and `d9` test positive without developing symptoms and are
/// quarantined.
pub fn rho_e(
    d2: u32,
    d3: u32,
    d9: u32,
    v: &StateVector,
    t: u32,
    params: &Parameters,
) -> Result<f64> {
    let pmf = positive_test_pmf(v, t, params)?;
    Ok(rho_e_with_pmf(d2, d3, d9, v, &pmf, params))
}

pub(crate) fn rho_e_with_pmf(
    d2: u32,
    d3: u32,
    d9: u32,
    v: &StateVector,
    test_pmf: &[f64],
    params: &Parameters,
) -> f64 {
    let t = test_pmf.len() as u32 - 1;
    if d2 + d3 + d9 > v.a || d9 > t {
        return 0.0;
    }
    let value = rho_e_sum(d2, d3, d9, v, test_pmf, params, d9);
    debug_assert!(
        (value - rho_e_sum(d2, d3, d9, v, test_pmf, params, 0)).abs() <= 1e-14,
        "terms with H < d9 must vanish"
    );
    value
}

/// The double sum over positives `H >= h_from` and tested would-be recoveries `F`.
#[allow(clippy::too_many_arguments)]
fn rho_e_sum(
    d2: u32,
    d3: u32,
    d9: u32,
    v: &StateVector,
    test_pmf: &[f64],
    params: &Parameters,
    h_from: u32,
) -> f64 {
    let a = v.a as i64;
    let (d2, d3, d9) = (d2 as i64, d3 as i64, d9 as i64);
    let mut total = 0.0;
    for (h, &s_h) in test_pmf.iter().enumerate().skip(h_from as usize) {
        let h = h as i64;
        if s_h == 0.0 || h > a {
            continue;
        }
        let mut inner = 0.0;
        for f in 0..=d9 {
            let recovering = rho(d2 as u32, (d3 + f) as u32, v, params);
            if recovering == 0.0 {
                continue;
            }
            let k = binom_f64(d3 + f, f)
                * binom_f64(a - (d2 + d3 + f), d9 - f)
                * binom_f64(d2, h - d9);
            inner += recovering * k;
        }
        total += s_h * inner / binom_f64(a, h);
    }
    total
}

fn multinomial3(n: u32, k: [u32; 3], p: [f64; 3], rest: f64) -> f64 {
    let used = k[0] + k[1] + k[2];
    if used > n {
        return 0.0;
    }
    multinom_f64(n, &k)
        * p[0].powi(k[0] as i32)
        * p[1].powi(k[1] as i32)
        * p[2].powi(k[2] as i32)
        * rest.powi((n - used) as i32)
}

/// Symptomatic outcomes before capacity is applied: `d4` recover, `d5` need a bed, `d6` die.
fn symptomatic_multinomial(d4: u32, d5: u32, d6: u32, v: &StateVector, params: &Parameters) -> f64 {
    multinomial3(
        v.i,
        [d4, d5, d6],
        [params.mu, params.psi, params.alpha],
        params.stay_symptomatic(),
    )
}

/// Free beds `C - O`.
pub fn free_beds(v: &StateVector, params: &Parameters) -> u32 {
    params.c.saturating_sub(v.o)
}

/// Symptomatic outcomes with hospital capacity: `d4` recover, `d5` admitted, `d6` die.
///
/// When more subjects need a bed than are free, the admitted count is the
/// number of free beds and the rest stay symptomatic; that mass is folded
/// onto `d5 = C - O`.
pub fn phi(d4: u32, d5: u32, d6: u32, v: &StateVector, params: &Parameters) -> f64 {
    let free = free_beds(v, params);
    if d4 + d5 + d6 > v.i || d5 > free {
        return 0.0;
    }
    if d5 < free {
        return symptomatic_multinomial(d4, d5, d6, v, params);
    }
    (0..=v.i - d4 - d6 - free)
        .map(|h| symptomatic_multinomial(d4, free + h, d6, v, params))
        .sum()
}

/// Hospitalised outcomes: `d7` die, `d8` recover.
pub fn zeta(d7: u32, d8: u32, v: &StateVector, params: &Parameters) -> f64 {
    if d7 + d8 > v.o {
        return 0.0;
    }
    multinom_f64(v.o, &[d7, d8])
        * params.sigma.powi(d7 as i32)
        * params.xi.powi(d8 as i32)
        * params.stay_hospitalised().powi((v.o - d7 - d8) as i32)
}

/// Quarantined outcomes: `d10` develop symptoms, `d11` recover.
pub fn chi(d10: u32, d11: u32, v: &StateVector, params: &Parameters) -> f64 {
    if d10 + d11 > v.q {
        return 0.0;
    }
    multinom_f64(v.q, &[d10, d11])
        * params.iota.powi(d10 as i32)
        * params.upsilon.powi(d11 as i32)
        * params.stay_quarantined().powi((v.q - d10 - d11) as i32)
}
