//! Brute-force references for small inputs.
//!
//! Nothing here shares code with the transforms or the lattice sweeps: orders
//! are enumerated one by one, parent sets by submask enumeration, and every
//! sum is a plain left-to-right accumulation.

use std::collections::HashMap;

use itertools::Itertools;

use crate::logspace::{log_add, log_sum_exp, LogScore, LOG_ZERO};
use crate::scoring::{DataMatrix, FamilyScorer, Feature, PriorSpec};
use crate::varset::VarSet;
use crate::zeta::Direction;
use crate::Error;

/// Largest `n` the order enumeration accepts.
pub const MAX_ORACLE_VARS: usize = 8;
/// Largest `n` the naive transform accepts.
pub const MAX_NAIVE_VARS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleResult {
    /// `log P(f, D)`.
    pub log_joint: LogScore,
    /// `log P(D)`.
    pub log_evidence: LogScore,
}

impl OracleResult {
    /// `P(f | D)`.
    pub fn posterior(&self) -> f64 {
        (self.log_joint - self.log_evidence).exp()
    }
}

fn check_size(n: usize) -> Result<(), Error> {
    if n > MAX_ORACLE_VARS {
        return Err(Error::InvalidInput(format!(
            "order enumeration handles at most {MAX_ORACLE_VARS} variables, got {n}"
        )));
    }
    Ok(())
}

/// Memoized `log sum_{G ⊆ L, |G| <= d, f_i(G) = 1} exp(log ρ_i(G) + loglik)`
/// for each `(i, L)` met during enumeration.
struct NodeSums<'a> {
    scorer: FamilyScorer<'a>,
    d: usize,
    feature: Feature,
    memo: HashMap<(usize, u64), LogScore>,
}

impl NodeSums<'_> {
    fn get(&mut self, i: usize, preds: VarSet) -> Result<LogScore, Error> {
        if let Some(x) = self.memo.get(&(i, preds.bits())) {
            return Ok(*x);
        }
        let mut acc = LOG_ZERO;
        let l = preds.bits();
        let mut g = l;
        loop {
            let set = VarSet::from_bits(g);
            if set.len() <= self.d && self.feature.admits(i, set) {
                acc = log_add(acc, self.scorer.family_score(i, set)?);
            }
            if g == 0 {
                break;
            }
            g = (g - 1) & l;
        }
        self.memo.insert((i, l), acc);
        Ok(acc)
    }
}

fn log_sum_over_orders(sums: &mut NodeSums<'_>, n: usize) -> Result<LogScore, Error> {
    let prior = *sums.scorer.prior();
    let mut total = LOG_ZERO;
    for order in (0..n).permutations(n) {
        let mut preds = VarSet::EMPTY;
        let mut term = 0.0;
        for &i in &order {
            term += prior.log_q(i, preds) + sums.get(i, preds)?;
            preds = preds.with(i);
        }
        total = log_add(total, term);
    }
    Ok(total)
}

/// `log sum_≺ prod_i q_i(L_i) sum_{G ⊆ L_i, |G| <= d} exp family(i, G)` over
/// all `n!` orders, with caller-supplied log weights. `family` should return
/// `-inf` for parent sets the feature rejects.
pub fn log_order_sum(
    n: usize,
    max_indegree: usize,
    log_q: impl Fn(usize, VarSet) -> LogScore,
    mut family: impl FnMut(usize, VarSet) -> LogScore,
) -> LogScore {
    let mut total = LOG_ZERO;
    for order in (0..n).permutations(n) {
        let mut preds = VarSet::EMPTY;
        let mut term = 0.0;
        for &i in &order {
            let l = preds.bits();
            let mut node = LOG_ZERO;
            let mut g = l;
            loop {
                let set = VarSet::from_bits(g);
                if set.len() <= max_indegree {
                    node = log_add(node, family(i, set));
                }
                if g == 0 {
                    break;
                }
                g = (g - 1) & l;
            }
            term += log_q(i, preds) + node;
            preds = preds.with(i);
        }
        total = log_add(total, term);
    }
    total
}

/// `P(f, D)` and `P(D)` by enumerating all `n!` orders.
pub fn posterior_by_order_enumeration(
    data: &DataMatrix,
    prior: &PriorSpec,
    max_indegree: usize,
    feature: Feature,
) -> Result<OracleResult, Error> {
    let n = data.vars();
    check_size(n)?;
    let run = |feature| -> Result<LogScore, Error> {
        let mut sums = NodeSums {
            scorer: FamilyScorer::new(data, *prior)?,
            d: max_indegree,
            feature,
            memo: HashMap::new(),
        };
        log_sum_over_orders(&mut sums, n)
    };
    let log_evidence = run(Feature::Trivial)?;
    let log_joint = if feature == Feature::Trivial {
        log_evidence
    } else {
        run(feature)?
    };
    Ok(OracleResult {
        log_joint,
        log_evidence,
    })
}

/// `log P(u -> v, D)` for every pair plus `log P(D)`, in one pass over the
/// orders. Row-major, NaN on the diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleMatrix {
    pub n: usize,
    pub log_evidence: LogScore,
    pub log_joint: Vec<LogScore>,
}

impl OracleMatrix {
    pub fn get(&self, u: usize, v: usize) -> f64 {
        (self.log_joint[u * self.n + v] - self.log_evidence).exp()
    }
}

/// Edge matrix by order enumeration. For each order and node `v`, the
/// order's weight with `v`'s factor `T_v` replaced by
/// `W_v[u] = sum_{G ⊆ L_v, u ∈ G} ...` is added to entry `(u, v)`.
pub fn edge_matrix_by_order_enumeration(
    data: &DataMatrix,
    prior: &PriorSpec,
    max_indegree: usize,
) -> Result<OracleMatrix, Error> {
    let n = data.vars();
    check_size(n)?;
    let scorer = FamilyScorer::new(data, *prior)?;
    // (i, L) -> [W_i[0], .., W_i[n-1], T_i]
    let mut memo: HashMap<(usize, u64), Vec<LogScore>> = HashMap::new();
    let mut node_sums = |i: usize, l: u64| -> Result<Vec<LogScore>, Error> {
        if let Some(x) = memo.get(&(i, l)) {
            return Ok(x.clone());
        }
        let mut w = vec![LOG_ZERO; n + 1];
        let mut g = l;
        loop {
            let set = VarSet::from_bits(g);
            if set.len() <= max_indegree {
                let s = scorer.family_score(i, set)?;
                for u in set.iter() {
                    w[u] = log_add(w[u], s);
                }
                w[n] = log_add(w[n], s);
            }
            if g == 0 {
                break;
            }
            g = (g - 1) & l;
        }
        memo.insert((i, l), w.clone());
        Ok(w)
    };

    let mut log_evidence = LOG_ZERO;
    let mut log_joint = vec![LOG_ZERO; n * n];
    for order in (0..n).permutations(n) {
        let mut preds = VarSet::EMPTY;
        // (node, log q, sums)
        let mut factors = Vec::with_capacity(n);
        for &i in &order {
            factors.push((i, prior.log_q(i, preds), node_sums(i, preds.bits())?));
            preds = preds.with(i);
        }
        let weight: LogScore = factors.iter().map(|(_, q, w)| q + w[n]).sum();
        log_evidence = log_add(log_evidence, weight);
        for (pos, (v, q, w)) in factors.iter().enumerate() {
            let rest: LogScore = factors
                .iter()
                .enumerate()
                .filter(|(other, _)| *other != pos)
                .map(|(_, (_, q, w))| q + w[n])
                .sum::<LogScore>()
                + q;
            for u in (0..n).filter(|u| u != v) {
                log_joint[u * n + v] = log_add(log_joint[u * n + v], rest + w[u]);
            }
        }
    }
    for v in 0..n {
        log_joint[v * n + v] = f64::NAN;
    }
    Ok(OracleMatrix {
        n,
        log_evidence,
        log_joint,
    })
}

/// Definitions evaluated literally over every `(T, S)` pair.
///
/// Upward: `t(T) = log sum_{S ⊆ T, |S| <= d} exp s(S)` for all `T`.
/// Downward: `t(T) = log sum_{S ⊇ T} exp s(S)` for `|T| <= d`, `-inf` above.
pub fn naive_truncated_sums(n: usize, s: &[LogScore], d: usize, direction: Direction) -> Vec<LogScore> {
    assert!(n <= MAX_NAIVE_VARS && s.len() == 1 << n);
    let full = (1u64 << n) - 1;
    (0..=full)
        .map(|t| {
            let mut terms = Vec::new();
            // Every submask of `free`, including the empty one.
            let mut visit = |free: u64, base: u64| {
                let mut x = free;
                loop {
                    terms.push(base | x);
                    if x == 0 {
                        break;
                    }
                    x = (x - 1) & free;
                }
            };
            match direction {
                Direction::Upward => visit(t, 0),
                Direction::Downward if t.count_ones() as usize <= d => visit(full & !t, t),
                Direction::Downward => {}
            }
            let values: Vec<LogScore> = terms
                .into_iter()
                .filter(|x| direction == Direction::Downward || x.count_ones() as usize <= d)
                .map(|x| s[x as usize])
                .collect();
            log_sum_exp(&values)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naive_edge_cases() {
        let s = vec![0.5, -1.0, 2.0, 0.25];
        let up = naive_truncated_sums(2, &s, 0, Direction::Upward);
        assert!(up.iter().all(|&x| x == 0.5));
        let down = naive_truncated_sums(2, &s, 0, Direction::Downward);
        assert!((down[0] - log_sum_exp(&s)).abs() < 1e-15);
        assert!(down[1..].iter().all(|&x| x == LOG_ZERO));
    }

    #[test]
    fn hand_expansions() {
        let one = log_order_sum(1, 0, |_, _| 0.0, |_, _| -1.5);
        assert_eq!(one, -1.5);
        // Two orders; the second node of each has two parent-set choices.
        let two = log_order_sum(2, 1, |_, _| 0.0, |_, _| 0.0);
        assert!((two - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rejects_large_n() {
        let rows: Vec<Vec<u16>> = (0..4).map(|t| (0..9).map(|i| ((t >> (i % 2)) & 1) as u16).collect()).collect();
        let data = DataMatrix::from_rows(&rows).unwrap();
        assert!(posterior_by_order_enumeration(&data, &PriorSpec::k2(), 1, Feature::Trivial).is_err());
    }
}
