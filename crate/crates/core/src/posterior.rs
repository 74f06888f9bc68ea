//! Edge posteriors `P(u -> v | D)` for every ordered pair.
//!
//! Per worker, the pipeline is:
//!
//! 1. score `B_i(S)` for the worker's sets, `|S| <= d`, `i ∉ S`;
//! 2. `A_i` by the upward transform, plus `log q_i`;
//! 3. `F` (forward layout) and `R` (mirrored layout);
//! 4. for each `v`: gather `log q_v(S) + F(S) + R(V - {v} - S)`, run the
//!    downward transform over the sub-lattice without `v` to get `Γ_v`, sum
//!    `B_v(G) + Γ_v(G)` over the worker's `G ∋ u`, and fold the partial sums
//!    onto the all-ones worker;
//! 5. the all-ones worker holds `F(V) = log P(D)` and divides.
//!
//! Alongside each column the pipeline also sums over all `G` with no edge
//! filter. That sum equals `P(D)`, so its ratio to `F(V)` is a built-in
//! self-test that must come out as 1.

use crate::lattice::{backward_worker, forward_worker, serial_forward_backward, LatticeSchedule, SubsetTable, TableRole};
use crate::logspace::{log_add, LogScore, LOG_ZERO};
use crate::runtime::{reduce_to_top, Endpoint, FabricError, HypercubeFabric, Stage, Tag};
use crate::scoring::{DataMatrix, FamilyScorer, Feature, PriorSpec};
use crate::varset::{low_mask, Layout, VarSet};
use crate::zeta::{
    downward_zeta_serial_with_stats, downward_zeta_worker, upward_zeta_serial, upward_zeta_worker, ZetaStats,
};
use crate::Error;

/// Score tables a worker holds at its peak: `B_i` and `A_i` for every node,
/// `F`, `R`, one `q F R` table and one received neighbor block.
pub fn tables_per_worker(n: usize) -> usize {
    2 * n + 4
}

/// Bytes of score tables per worker on a `2^k` hypercube. Process overhead
/// is not included.
pub fn estimate_worker_bytes(n: usize, k: usize) -> u64 {
    let block = 1u64.checked_shl((n - k.min(n)) as u32).unwrap_or(u64::MAX);
    block.saturating_mul(8 * tables_per_worker(n) as u64)
}

#[derive(Clone, Debug)]
pub struct EdgePosteriorMatrix {
    n: usize,
    log_evidence: LogScore,
    /// `log P(u -> v, D)` at `u * n + v`; NaN on the diagonal.
    log_joint: Vec<LogScore>,
    /// Per `v`: `log(sum_G B_v(G) Γ_v(G)) - F(V)`; zero up to rounding.
    self_test: Vec<LogScore>,
}

/// Bitwise equality, so the NaN diagonal compares equal to itself.
impl PartialEq for EdgePosteriorMatrix {
    fn eq(&self, other: &Self) -> bool {
        let same = |a: &[LogScore], b: &[LogScore]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        };
        self.n == other.n
            && self.log_evidence.to_bits() == other.log_evidence.to_bits()
            && same(&self.log_joint, &other.log_joint)
            && same(&self.self_test, &other.self_test)
    }
}

impl EdgePosteriorMatrix {
    pub fn new(n: usize, log_evidence: LogScore, log_joint: Vec<LogScore>, self_test: Vec<LogScore>) -> Self {
        assert_eq!(log_joint.len(), n * n);
        assert_eq!(self_test.len(), n);
        EdgePosteriorMatrix {
            n,
            log_evidence,
            log_joint,
            self_test,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `log P(D)`.
    pub fn log_evidence(&self) -> LogScore {
        self.log_evidence
    }

    /// `log P(u -> v, D)`; NaN when `u == v`.
    pub fn log_joint(&self, u: usize, v: usize) -> LogScore {
        self.log_joint[u * self.n + v]
    }

    /// `P(u -> v | D)`; NaN when `u == v`.
    pub fn get(&self, u: usize, v: usize) -> f64 {
        (self.log_joint(u, v) - self.log_evidence).exp()
    }

    /// Row-major `n x n` posteriors.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|u| (0..self.n).map(|v| self.get(u, v)).collect())
            .collect()
    }

    /// Per-column log ratio of the unfiltered sum to `P(D)`.
    pub fn self_test(&self) -> &[LogScore] {
        &self.self_test
    }

    /// Largest `|log ratio|` of the self-test; zero for `n = 1`.
    pub fn self_test_deviation(&self) -> f64 {
        self.self_test.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Work counters of one worker over a full pipeline run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WorkerStats {
    /// One upward transform per node.
    pub upward: Vec<ZetaStats>,
    /// One downward transform per `v`.
    pub downward: Vec<ZetaStats>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorRun {
    pub matrix: EdgePosteriorMatrix,
    pub workers: Vec<WorkerStats>,
}

fn check_inputs(n: usize, k: usize, d: usize) -> Result<(), Error> {
    if n == 0 {
        return Err(Error::InvalidInput("data has no variables".into()));
    }
    if d >= n {
        return Err(Error::InvalidInput(format!(
            "max indegree {d} must be below the number of variables {n}"
        )));
    }
    if k > n {
        return Err(Error::InvalidInput(format!(
            "2^{k} workers exceed the 2^{n} subsets of {n} variables"
        )));
    }
    Ok(())
}

/// `B_i` on one worker's forward-layout block; `-inf` for `i ∈ S` or
/// `|S| > d`.
fn score_block(scorer: &FamilyScorer<'_>, layout: Layout, worker: u64, i: usize, d: usize) -> Result<Vec<LogScore>, Error> {
    (0..layout.block_len() as u64)
        .map(|b| {
            let s = layout.compose(worker, b);
            if s.contains(i) || s.len() > d {
                Ok(LOG_ZERO)
            } else {
                Ok(scorer.family_score(i, s)?)
            }
        })
        .collect()
}

/// Add `log q_i(S)` to every `A_i(S)` with `i ∉ S`.
fn apply_q(prior: &PriorSpec, layout: Layout, worker: u64, i: usize, a: &mut [LogScore]) {
    for (b, x) in a.iter_mut().enumerate() {
        let s = layout.compose(worker, b as u64);
        if !s.contains(i) {
            *x += prior.log_q(i, s);
        }
    }
}

#[inline]
fn qfr(log_q: LogScore, f: LogScore, r: LogScore) -> LogScore {
    log_q + f + r
}

/// `log q_v(S) + F(S) + R(V - {v} - S)` on this worker's forward-layout
/// block; `-inf` wherever `v ∈ S`.
///
/// For `v < k` the needed `R` block lives on the neighbor across dimension
/// `v`: workers with bit `v` set send theirs and keep an all `-inf` table.
/// For `v >= k` it is a local re-index of the worker's own `R` block.
pub async fn exchange_r(
    ep: &mut Endpoint,
    layout: Layout,
    v: usize,
    prior: &PriorSpec,
    f: &[LogScore],
    r: &[LogScore],
) -> Result<Vec<LogScore>, FabricError> {
    let (k, me) = (layout.k, ep.id());
    let mask = layout.block_mask() as usize;
    let mut out = vec![LOG_ZERO; layout.block_len()];
    if v < k {
        let tag = Tag::new(Stage::Exchange, v as u32, 0);
        if ep.bit(v) {
            ep.send(v, tag, r.to_vec())?;
            return Ok(out);
        }
        let theirs = ep.recv(v, tag).await?.payload;
        for (b, x) in out.iter_mut().enumerate() {
            let s = layout.compose(me, b as u64);
            *x = qfr(prior.log_q(v, s), f[b], theirs[!b & mask]);
        }
    } else {
        let vb = 1usize << (v - k);
        for (b, x) in out.iter_mut().enumerate() {
            if b & vb == 0 {
                let s = layout.compose(me, b as u64);
                *x = qfr(prior.log_q(v, s), f[b], r[!b & mask & !vb]);
            }
        }
    }
    ep.add_ops(out.len() as u64);
    Ok(out)
}

/// Per-`u` partial sums of `B_v(G) + Γ_v(G)` over this worker's `G ∋ u`,
/// with the unfiltered sum appended at index `n`.
fn edge_partials(layout: Layout, worker: u64, v: usize, d: usize, b_v: &[LogScore], gamma: &[LogScore]) -> Vec<LogScore> {
    let n = layout.n;
    let mut part = vec![LOG_ZERO; n + 1];
    for (b, (bv, g)) in b_v.iter().zip(gamma).enumerate() {
        let set = layout.compose(worker, b as u64);
        if set.len() > d || set.contains(v) {
            continue;
        }
        let w = bv + g;
        for u in set.iter() {
            part[u] = log_add(part[u], w);
        }
        part[n] = log_add(part[n], w);
    }
    part
}

struct Pipeline<'a> {
    scorer: FamilyScorer<'a>,
    n: usize,
    d: usize,
    layout: Layout,
    schedule: LatticeSchedule,
}

struct WorkerOutput {
    stats: WorkerStats,
    /// Present on the all-ones worker: `(F(V), joint columns, self-test)`.
    top: Option<(LogScore, Vec<Vec<LogScore>>, Vec<LogScore>)>,
}

async fn pipeline_worker(mut ep: Endpoint, ctx: &Pipeline<'_>) -> Result<WorkerOutput, Error> {
    let (n, d, layout) = (ctx.n, ctx.d, ctx.layout);
    let me = ep.id();
    let prior = ctx.scorer.prior();
    let table_bytes = |tables: usize| (tables * layout.block_len() * 8) as u64;

    let b: Vec<Vec<LogScore>> = (0..n)
        .map(|i| score_block(&ctx.scorer, layout, me, i, d))
        .collect::<Result<_, _>>()
        .map_err(Error::in_stage("scoring"))?;
    ep.note_table_bytes(table_bytes(n));

    let mut stats = WorkerStats::default();
    let mut a = b.clone();
    ep.note_table_bytes(table_bytes(2 * n));
    for (i, a_i) in a.iter_mut().enumerate() {
        let s = upward_zeta_worker(&mut ep, layout, d, i as u32, a_i, false)
            .await
            .map_err(|e| Error::in_stage("upward transform")(e.into()))?;
        apply_q(prior, layout, me, i, a_i);
        stats.upward.push(s);
    }

    let f = forward_worker(&mut ep, &ctx.schedule, &a, 0)
        .await
        .map_err(|e| Error::in_stage("forward sums")(e.into()))?;
    ep.note_table_bytes(table_bytes(2 * n + 1));
    let r = backward_worker(&mut ep, &ctx.schedule, &a, 0)
        .await
        .map_err(|e| Error::in_stage("backward sums")(e.into()))?;
    ep.note_table_bytes(table_bytes(2 * n + 2));

    let top = me == layout.worker_mask();
    let mut columns = Vec::with_capacity(if top { n } else { 0 });
    for v in 0..n {
        let mut gamma = exchange_r(&mut ep, layout, v, prior, &f, &r)
            .await
            .map_err(|e| Error::in_stage("R exchange")(e.into()))?;
        ep.note_table_bytes(table_bytes(2 * n + if v < layout.k { 4 } else { 3 }));
        let ground = low_mask(n) & !(1 << v);
        let s = downward_zeta_worker(&mut ep, layout, d, ground, v as u32, &mut gamma, false)
            .await
            .map_err(|e| Error::in_stage("downward transform")(e.into()))?;
        stats.downward.push(s);
        let part = edge_partials(layout, me, v, d, &b[v], &gamma);
        let total = reduce_to_top(&mut ep, v as u32, part)
            .await
            .map_err(|e| Error::in_stage("reduce")(e.into()))?;
        if let Some(total) = total {
            columns.push(total);
        }
    }

    let top = top.then(|| {
        let log_evidence = f[layout.block_len() - 1];
        let self_test = columns.iter().map(|c| c[n] - log_evidence).collect();
        (log_evidence, columns, self_test)
    });
    Ok(WorkerOutput { stats, top })
}

/// All edge posteriors on `fabric`, with per-worker transform counters.
pub fn edge_posteriors_with_stats(
    fabric: &mut HypercubeFabric,
    data: &DataMatrix,
    prior: &PriorSpec,
    max_indegree: usize,
) -> Result<PosteriorRun, Error> {
    let (n, k, d) = (data.vars(), fabric.dim(), max_indegree);
    check_inputs(n, k, d)?;
    let ctx = Pipeline {
        scorer: FamilyScorer::new(data, *prior)?,
        n,
        d,
        layout: Layout::forward(n, k),
        schedule: LatticeSchedule::new(n, k),
    };
    let ctx = &ctx;
    let outputs = fabric.run(vec![(); 1 << k], |ep, ()| pipeline_worker(ep, ctx))?;
    let mut workers = Vec::with_capacity(outputs.len());
    let mut top = None;
    for out in outputs {
        workers.push(out.stats);
        if out.top.is_some() {
            top = out.top;
        }
    }
    let (log_evidence, columns, self_test) = top.expect("the all-ones worker reports");
    let mut log_joint = vec![f64::NAN; n * n];
    for (v, col) in columns.iter().enumerate() {
        for u in (0..n).filter(|&u| u != v) {
            log_joint[u * n + v] = col[u];
        }
    }
    Ok(PosteriorRun {
        matrix: EdgePosteriorMatrix::new(n, log_evidence, log_joint, self_test),
        workers,
    })
}

/// All edge posteriors on `fabric`.
pub fn edge_posteriors(
    fabric: &mut HypercubeFabric,
    data: &DataMatrix,
    prior: &PriorSpec,
    max_indegree: usize,
) -> Result<EdgePosteriorMatrix, Error> {
    Ok(edge_posteriors_with_stats(fabric, data, prior, max_indegree)?.matrix)
}

/// Dense `B_i` tables over all `2^n` sets for the trivial feature.
pub fn dense_local_scores(scorer: &FamilyScorer<'_>, d: usize) -> Result<Vec<Vec<LogScore>>, Error> {
    let n = scorer.data().vars();
    let layout = Layout::forward(n, 0);
    (0..n).map(|i| score_block(scorer, layout, 0, i, d)).collect()
}

/// The same computation in one address space with dense `2^n` tables and no
/// fabric. Used as the serial baseline.
pub fn edge_posteriors_serial(data: &DataMatrix, prior: &PriorSpec, max_indegree: usize) -> Result<EdgePosteriorMatrix, Error> {
    let (n, d) = (data.vars(), max_indegree);
    check_inputs(n, 0, d)?;
    let scorer = FamilyScorer::new(data, *prior)?;
    let layout = Layout::forward(n, 0);
    let b = dense_local_scores(&scorer, d).map_err(Error::in_stage("scoring"))?;
    let a: Vec<Vec<LogScore>> = b
        .iter()
        .enumerate()
        .map(|(i, b_i)| {
            let mut a_i = upward_zeta_serial(n, d, b_i);
            apply_q(prior, layout, 0, i, &mut a_i);
            a_i
        })
        .collect();
    let (f, r) = serial_forward_backward(n, &a).map_err(|e| Error::in_stage("forward-backward sums")(e.into()))?;
    let full = low_mask(n) as usize;
    let log_evidence = f[full];
    let mut log_joint = vec![f64::NAN; n * n];
    let mut self_test = Vec::with_capacity(n);
    for v in 0..n {
        let vb = 1usize << v;
        let q: Vec<LogScore> = (0..=full)
            .map(|s| {
                if s & vb != 0 {
                    LOG_ZERO
                } else {
                    qfr(prior.log_q(v, VarSet::from_bits(s as u64)), f[s], r[full & !vb & !s])
                }
            })
            .collect();
        let (gamma, _) = downward_zeta_serial_with_stats(n, d, (full & !vb) as u64, &q, false);
        let part = edge_partials(layout, 0, v, d, &b[v], &gamma);
        for u in (0..n).filter(|&u| u != v) {
            log_joint[u * n + v] = part[u];
        }
        self_test.push(part[n] - log_evidence);
    }
    Ok(EdgePosteriorMatrix::new(n, log_evidence, log_joint, self_test))
}

/// `log P(f, D)` for one modular feature by the forward sum alone: score
/// `B_i` with the feature's indicator, transform, and read `F(V)`.
pub fn feature_posterior_forward(data: &DataMatrix, prior: &PriorSpec, max_indegree: usize, feature: Feature) -> Result<LogScore, Error> {
    let (n, d) = (data.vars(), max_indegree);
    check_inputs(n, 0, d)?;
    let scorer = FamilyScorer::new(data, *prior)?;
    let layout = Layout::forward(n, 0);
    let size = 1usize << n;
    let mut a = Vec::with_capacity(n);
    for i in 0..n {
        let mut b_i = score_block(&scorer, layout, 0, i, d)?;
        for (s, x) in b_i.iter_mut().enumerate() {
            if !feature.admits(i, VarSet::from_bits(s as u64)) {
                *x = LOG_ZERO;
            }
        }
        let mut a_i = upward_zeta_serial(n, d, &b_i);
        apply_q(prior, layout, 0, i, &mut a_i);
        a.push(a_i);
    }
    let mut f = vec![LOG_ZERO; size];
    f[0] = 0.0;
    for s in 1..size {
        f[s] = VarSet::from_bits(s as u64)
            .iter()
            .fold(LOG_ZERO, |acc, i| log_add(acc, a[i][s ^ 1 << i] + f[s ^ 1 << i]));
    }
    Ok(f[size - 1])
}

/// `A_i` blocks for every node on every worker, indexed `[worker][node]`.
pub fn compute_a(fabric: &mut HypercubeFabric, data: &DataMatrix, prior: &PriorSpec, max_indegree: usize) -> Result<Vec<Vec<Vec<LogScore>>>, Error> {
    let (n, k, d) = (data.vars(), fabric.dim(), max_indegree);
    check_inputs(n, k, d)?;
    let scorer = FamilyScorer::new(data, *prior)?;
    let layout = Layout::forward(n, k);
    let scorer = &scorer;
    fabric.run(vec![(); 1 << k], |mut ep, ()| async move {
        let me = ep.id();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut a_i = score_block(scorer, layout, me, i, d)?;
            upward_zeta_worker(&mut ep, layout, d, i as u32, &mut a_i, false).await?;
            apply_q(scorer.prior(), layout, me, i, &mut a_i);
            out.push(a_i);
        }
        Ok::<_, Error>(out)
    })
}

/// `q F R` tables for node `v` from forward-layout `F` and mirrored `R`.
pub fn exchange_r_for_v(
    fabric: &mut HypercubeFabric,
    v: usize,
    prior: &PriorSpec,
    f: &[SubsetTable],
    r: &[SubsetTable],
) -> Result<Vec<SubsetTable>, FabricError> {
    let layout = f[0].layout;
    let inputs: Vec<(&[LogScore], &[LogScore])> = f
        .iter()
        .zip(r)
        .map(|(f, r)| (f.values.as_slice(), r.values.as_slice()))
        .collect();
    let blocks = fabric.run(inputs, |mut ep, (f, r)| async move {
        exchange_r(&mut ep, layout, v, prior, f, r).await
    })?;
    Ok(blocks
        .into_iter()
        .enumerate()
        .map(|(owner, values)| SubsetTable {
            owner: owner as u64,
            role: TableRole::QFR(v),
            layout,
            values,
        })
        .collect())
}

/// `Γ_v` from `q F R` tables: the downward transform over the sub-lattice
/// that excludes `v`.
pub fn compute_gamma(
    fabric: &mut HypercubeFabric,
    v: usize,
    qfr: Vec<SubsetTable>,
    max_indegree: usize,
) -> Result<Vec<SubsetTable>, FabricError> {
    let layout = qfr[0].layout;
    let ground = low_mask(layout.n) & !(1 << v);
    let blocks = fabric.run(qfr, |mut ep, mut t| async move {
        downward_zeta_worker(&mut ep, layout, max_indegree, ground, v as u32, &mut t.values, false).await?;
        t.role = TableRole::Gamma(v);
        Ok::<_, FabricError>(t)
    })?;
    Ok(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::Backend;

    fn chain_data() -> DataMatrix {
        let rows: Vec<Vec<u16>> = (0..60u16)
            .map(|t| {
                let x = t % 2;
                let y = if t % 7 == 0 { 1 - x } else { x };
                let z = if t % 5 == 0 { 1 - y } else { y };
                vec![x, y, z, (t / 3) % 2]
            })
            .collect();
        DataMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn estimator_counts_tables() {
        assert_eq!(estimate_worker_bytes(10, 0), 8 * 1024 * 24);
        assert_eq!(estimate_worker_bytes(10, 3), 8 * 128 * 24);
    }

    #[test]
    fn hypercube_matches_serial_and_self_test_holds() {
        let data = chain_data();
        let prior = PriorSpec::k2();
        for d in 0..=3 {
            let serial = edge_posteriors_serial(&data, &prior, d).unwrap();
            assert!(serial.self_test_deviation() < 1e-12);
            for k in 0..=3 {
                let mut fabric = HypercubeFabric::spawn(k, Backend::Simulated).unwrap();
                let par = edge_posteriors(&mut fabric, &data, &prior, d).unwrap();
                assert_eq!(par.log_evidence().to_bits(), serial.log_evidence().to_bits());
                assert!(par.self_test_deviation() < 1e-12);
                for u in 0..4 {
                    for v in (0..4).filter(|&v| v != u) {
                        let (a, b) = (par.get(u, v), serial.get(u, v));
                        assert!((a - b).abs() < 1e-12, "d={d} k={k} {u}->{v}: {a} vs {b}");
                        assert!((0.0..=1.0 + 1e-12).contains(&a));
                    }
                }
                assert_eq!(fabric.locality_violations(), 0);
            }
        }
    }

    #[test]
    fn forward_only_feature_path_agrees() {
        let data = chain_data();
        let prior = PriorSpec::default();
        let post = edge_posteriors_serial(&data, &prior, 2).unwrap();
        let evidence = feature_posterior_forward(&data, &prior, 2, Feature::Trivial).unwrap();
        assert!((evidence - post.log_evidence()).abs() < 1e-10);
        let joint = feature_posterior_forward(&data, &prior, 2, Feature::Edge { from: 0, to: 1 }).unwrap();
        assert!((joint - post.log_joint(0, 1)).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_sizes() {
        let data = chain_data();
        let mut fabric = HypercubeFabric::spawn(5, Backend::Simulated).unwrap();
        assert!(matches!(
            edge_posteriors(&mut fabric, &data, &PriorSpec::default(), 1),
            Err(Error::InvalidInput(_))
        ));
        assert!(edge_posteriors_serial(&data, &PriorSpec::default(), 4).is_err());
    }
}
