//! Forward sums `F` and backward sums `R` over the subset lattice.
//!
//! `F(∅) = 0`, `F(S) = log sum_{i ∈ S} exp(A_i(S - {i}) + F(S - {i}))`.
//! `R(∅) = 0`, `R(S) = log sum_{i ∈ S} exp(A_i(V - S) + R(S - {i}))`.
//!
//! On a `2^k` hypercube, `F` uses the forward layout and `R` the mirrored
//! one, so `A_i(V - S)` sits on the worker that computes `R(S)`. Each worker
//! walks its `2^(n-k)` blocks in [`LatticeSchedule`] order; lattice edges
//! along the low `k` bits are hypercube links, the rest stay on the worker.
//! Both sums fold their terms in ascending `i`, in every mode, so the
//! hypercube result equals the single-table DP bit for bit.

use thiserror::Error;

use crate::logspace::{log_add, LogScore, LOG_ZERO};
use crate::runtime::{Endpoint, FabricError, HypercubeFabric, Stage, Tag};
use crate::varset::{low_mask, subsets_upto, Layout, VarSet};

/// Block processing order shared by every worker: ascending popcount of the
/// block prefix, then ascending value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeSchedule {
    n: usize,
    k: usize,
    prefixes: Vec<u64>,
}

impl LatticeSchedule {
    pub fn new(n: usize, k: usize) -> Self {
        assert!(k <= n && n < 64);
        let prefixes = subsets_upto(VarSet::from_bits(low_mask(n - k)), n - k)
            .into_iter()
            .map(VarSet::bits)
            .collect();
        LatticeSchedule { n, k, prefixes }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn prefixes(&self) -> &[u64] {
        &self.prefixes
    }

    /// `2^(n-k) + k`.
    pub fn depth(&self) -> usize {
        self.prefixes.len() + self.k
    }

    /// Length of the pipeline when every block takes one step and starts as
    /// soon as its worker is free and all of its lattice predecessors are
    /// done. Computed by list scheduling over the real dependency graph.
    pub fn simulate_steps(&self) -> usize {
        let blocks = self.prefixes.len();
        let workers = 1usize << self.k;
        let mut position = vec![0usize; blocks];
        for (p, &b) in self.prefixes.iter().enumerate() {
            position[b as usize] = p;
        }
        // finish[p * workers + r]: step in which worker r completes block p.
        let mut finish = vec![0usize; blocks * workers];
        let mut last = 0;
        for (p, &b) in self.prefixes.iter().enumerate() {
            for r in 0..workers {
                let mut ready = if p > 0 { finish[(p - 1) * workers + r] } else { 0 };
                for i in 0..self.k {
                    if r >> i & 1 == 1 {
                        ready = ready.max(finish[p * workers + (r ^ 1 << i)]);
                    }
                }
                for bit in VarSet::from_bits(b).iter() {
                    let q = position[(b ^ 1 << bit) as usize];
                    ready = ready.max(finish[q * workers + r]);
                }
                finish[p * workers + r] = ready + 1;
                last = last.max(ready + 1);
            }
        }
        last
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableRole {
    A(usize),
    F,
    R,
    QFR(usize),
    Gamma(usize),
}

/// One worker's block of a lattice-indexed table.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetTable {
    pub owner: u64,
    pub role: TableRole,
    pub layout: Layout,
    /// Indexed by block prefix.
    pub values: Vec<LogScore>,
}

impl SubsetTable {
    pub fn get(&self, s: VarSet) -> Option<LogScore> {
        let addr = self.layout.split(s);
        (addr.worker == self.owner).then(|| self.values[addr.block as usize])
    }

    /// Rebuild the dense `2^n` table from every worker's block.
    pub fn assemble(tables: &[SubsetTable]) -> Vec<LogScore> {
        let layout = tables[0].layout;
        let mut full = vec![LOG_ZERO; 1usize << layout.n];
        for t in tables {
            for (b, x) in t.values.iter().enumerate() {
                full[layout.compose(t.owner, b as u64).bits() as usize] = *x;
            }
        }
        full
    }

    /// Cut a dense table into per-worker blocks.
    pub fn distribute(full: &[LogScore], layout: Layout, role: TableRole) -> Vec<SubsetTable> {
        (0..layout.workers() as u64)
            .map(|r| SubsetTable {
                owner: r,
                role,
                layout,
                values: (0..layout.block_len() as u64)
                    .map(|b| full[layout.compose(r, b).bits() as usize])
                    .collect(),
            })
            .collect()
    }
}

#[derive(Debug, Error)]
#[error("cannot allocate {required} bytes for lattice tables")]
pub struct AllocationError {
    pub required: u64,
}

fn alloc_table(len: usize) -> Result<Vec<LogScore>, AllocationError> {
    let mut v = Vec::new();
    v.try_reserve_exact(len).map_err(|_| AllocationError {
        required: (len * std::mem::size_of::<LogScore>()) as u64,
    })?;
    v.resize(len, LOG_ZERO);
    Ok(v)
}

/// Forward and backward sums in one address space. `a[i]` is the dense
/// `2^n` table of `A_i` (`-inf` wherever `i ∈ S`).
pub fn serial_forward_backward(
    n: usize,
    a: &[Vec<LogScore>],
) -> Result<(Vec<LogScore>, Vec<LogScore>), AllocationError> {
    assert_eq!(a.len(), n);
    let size = 1usize << n;
    let full = low_mask(n);
    let mut f = alloc_table(size)?;
    let mut r = alloc_table(size)?;
    f[0] = 0.0;
    r[0] = 0.0;
    for s in 1..size {
        let set = VarSet::from_bits(s as u64);
        let comp = (!s as u64 & full) as usize;
        let (mut fs, mut rs) = (LOG_ZERO, LOG_ZERO);
        for i in set.iter() {
            let prev = s ^ 1 << i;
            fs = log_add(fs, a[i][prev] + f[prev]);
            rs = log_add(rs, a[i][comp] + r[prev]);
        }
        f[s] = fs;
        r[s] = rs;
    }
    Ok((f, r))
}

/// Forward sums on this worker. `a[i]` is this worker's forward-layout
/// block of `A_i`; the result is its forward-layout block of `F`.
///
/// Each block waits for one value per set bit of the worker id and sends
/// `A_j(S) + F(S)` across every clear bit `j`.
pub async fn forward_worker(
    ep: &mut Endpoint,
    schedule: &LatticeSchedule,
    a: &[Vec<LogScore>],
    instance: u32,
) -> Result<Vec<LogScore>, FabricError> {
    let (n, k, r) = (schedule.n, schedule.k, ep.id());
    let mut f = vec![LOG_ZERO; 1usize << (n - k)];
    let mut incoming = vec![LOG_ZERO; k];
    for &b in schedule.prefixes() {
        let tag = Tag::new(Stage::Forward, instance, b);
        for (i, slot) in incoming.iter_mut().enumerate() {
            if r >> i & 1 == 1 {
                *slot = ep.recv(i, tag).await?.payload[0];
            }
        }
        let set = VarSet::from_bits(b << k | r);
        let b = b as usize;
        f[b] = if set.is_empty() {
            0.0
        } else {
            set.iter().fold(LOG_ZERO, |acc, i| {
                let term = if i < k {
                    incoming[i]
                } else {
                    let prev = b ^ 1 << (i - k);
                    a[i][prev] + f[prev]
                };
                log_add(acc, term)
            })
        };
        for j in (0..k).filter(|j| r >> j & 1 == 0) {
            ep.send(j, tag, vec![a[j][b] + f[b]])?;
        }
        ep.add_ops(n as u64);
    }
    Ok(f)
}

/// Backward sums on this worker. `a[i]` is this worker's forward-layout
/// block of `A_i`; the result is its mirrored-layout block of `R`.
///
/// Under the mirrored layout `V - S` sits on this worker at block
/// `!b`, so every `A_i(V - S)` is local and neighbors exchange raw `R`.
pub async fn backward_worker(
    ep: &mut Endpoint,
    schedule: &LatticeSchedule,
    a: &[Vec<LogScore>],
    instance: u32,
) -> Result<Vec<LogScore>, FabricError> {
    let (n, k, r) = (schedule.n, schedule.k, ep.id());
    let mirror = Layout::mirrored(n, k);
    let block_mask = mirror.block_mask();
    let mut rr = vec![LOG_ZERO; 1usize << (n - k)];
    let mut incoming = vec![LOG_ZERO; k];
    for &b in schedule.prefixes() {
        let tag = Tag::new(Stage::Backward, instance, b);
        for (i, slot) in incoming.iter_mut().enumerate() {
            if r >> i & 1 == 0 {
                *slot = ep.recv(i, tag).await?.payload[0];
            }
        }
        let set = mirror.compose(r, b);
        let comp = (!b & block_mask) as usize;
        let b = b as usize;
        rr[b] = if set.is_empty() {
            0.0
        } else {
            set.iter().fold(LOG_ZERO, |acc, i| {
                let prev = if i < k { incoming[i] } else { rr[b ^ 1 << (i - k)] };
                log_add(acc, a[i][comp] + prev)
            })
        };
        for j in (0..k).filter(|j| r >> j & 1 == 1) {
            ep.send(j, tag, vec![rr[b]])?;
        }
        ep.add_ops(n as u64);
    }
    Ok(rr)
}

fn run_sweep(
    fabric: &mut HypercubeFabric,
    n: usize,
    a: &[Vec<Vec<LogScore>>],
    backward: bool,
) -> Result<Vec<SubsetTable>, FabricError> {
    let k = fabric.dim();
    let schedule = LatticeSchedule::new(n, k);
    let schedule = &schedule;
    let inputs: Vec<&[Vec<LogScore>]> = a.iter().map(Vec::as_slice).collect();
    let blocks = fabric.run(inputs, |mut ep, a| async move {
        if backward {
            backward_worker(&mut ep, schedule, a, 0).await
        } else {
            forward_worker(&mut ep, schedule, a, 0).await
        }
    })?;
    let (layout, role) = if backward {
        (Layout::mirrored(n, k), TableRole::R)
    } else {
        (Layout::forward(n, k), TableRole::F)
    };
    Ok(blocks
        .into_iter()
        .enumerate()
        .map(|(r, values)| SubsetTable {
            owner: r as u64,
            role,
            layout,
            values,
        })
        .collect())
}

/// `F` on every worker. `a[r][i]` is worker `r`'s forward-layout block of
/// `A_i`.
pub fn compute_forward(
    fabric: &mut HypercubeFabric,
    n: usize,
    a: &[Vec<Vec<LogScore>>],
) -> Result<Vec<SubsetTable>, FabricError> {
    run_sweep(fabric, n, a, false)
}

/// `R` on every worker, in the mirrored layout.
pub fn compute_backward(
    fabric: &mut HypercubeFabric,
    n: usize,
    a: &[Vec<Vec<LogScore>>],
) -> Result<Vec<SubsetTable>, FabricError> {
    run_sweep(fabric, n, a, true)
}

/// Per-worker A blocks from dense per-node tables.
pub fn distribute_a(n: usize, k: usize, a: &[Vec<LogScore>]) -> Vec<Vec<Vec<LogScore>>> {
    let layout = Layout::forward(n, k);
    let per_node: Vec<Vec<SubsetTable>> = a
        .iter()
        .enumerate()
        .map(|(i, full)| SubsetTable::distribute(full, layout, TableRole::A(i)))
        .collect();
    (0..layout.workers())
        .map(|r| per_node.iter().map(|t| t[r].values.clone()).collect())
        .collect()
}
