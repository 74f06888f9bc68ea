#![allow(dead_code)]

use edgewise::logspace::{rel_diff, LogScore, LOG_ZERO};
use edgewise::scoring::{DataMatrix, PriorSpec};
use edgewise::synth::{generate, SynthSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seeded synthetic data with `n` binary or ternary variables.
pub fn synthetic(n: usize, samples: usize, arity: usize, seed: u64) -> DataMatrix {
    generate(&SynthSpec {
        vars: n,
        samples,
        max_indegree: 2,
        arity,
        seed,
    })
    .expect("synthetic data")
    .data
}

/// Random log-domain table of length `2^n` with roughly one `-inf` in eight.
pub fn random_table(rng: &mut ChaCha8Rng, n: usize) -> Vec<LogScore> {
    (0..1usize << n)
        .map(|_| {
            if rng.gen_ratio(1, 8) {
                LOG_ZERO
            } else {
                rng.gen_range(-20.0..5.0)
            }
        })
        .collect()
}

pub fn random_prior(rng: &mut ChaCha8Rng) -> PriorSpec {
    if rng.gen_bool(0.3) {
        PriorSpec::k2()
    } else {
        PriorSpec::bdeu(rng.gen_range(0.2..8.0))
    }
}

/// Equal `-inf`, or relative difference at most `tol`.
pub fn close(a: LogScore, b: LogScore, tol: f64) -> bool {
    (a == LOG_ZERO && b == LOG_ZERO) || rel_diff(a, b) <= tol
}

/// Relative difference of two probabilities given as logs: `|exp(a - b) - 1|`.
pub fn prob_rel(a: LogScore, b: LogScore) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).exp_m1().abs()
    }
}

/// Chain 0 -> 1 -> 2, 200 rows, each copy flipped with a fixed pattern.
pub fn chain_data() -> DataMatrix {
    let rows: Vec<Vec<u16>> = (0..200u16)
        .map(|t| {
            let x = (t / 2) % 2;
            let y = if t % 9 == 0 { 1 - x } else { x };
            let z = if t % 7 == 3 { 1 - y } else { y };
            vec![x, y, z]
        })
        .collect();
    DataMatrix::from_rows(&rows).unwrap()
}
