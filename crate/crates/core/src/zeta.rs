//! Truncated upward and downward zeta transforms over the subset lattice.
//!
//! Upward: `t(T) = log sum_{S ⊆ T, |S| <= d} exp s(S)` for every `T`.
//! Downward: `t(T) = log sum_{T ⊆ S} exp s(S)` for every `|T| <= d`; entries
//! with `|T| > d` come back as `-inf`.
//!
//! One block kernel does the arithmetic for both the serial sweep (a single
//! block holding all `2^n` sets) and the hypercube version (one block of
//! `2^(n-k)` sets per worker), so every entry sees the same additions in the
//! same order and the two paths agree bit for bit.

use crate::logspace::{log_add, LogScore, LOG_ZERO};
use crate::runtime::{Endpoint, FabricError, HypercubeFabric, Stage, Tag};
use crate::varset::{low_mask, subsets_upto, Layout, VarSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Upward,
    Downward,
}

/// Work and traffic of one transform on one worker.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ZetaStats {
    /// Guarded loop-body executions, one per `(iteration, set)` pair that
    /// passes the truncation guard.
    pub ops: u64,
    /// Values sent to the neighbor, per iteration.
    pub sent_per_iteration: Vec<u64>,
    /// Local reads of an entry whose value predates the previous iteration.
    /// Only tracked when instrumentation is on; always zero otherwise.
    pub stale_reads: u64,
}

impl ZetaStats {
    fn new(n: usize) -> Self {
        ZetaStats {
            sent_per_iteration: vec![0; n],
            ..Default::default()
        }
    }

    pub fn values_sent(&self) -> u64 {
        self.sent_per_iteration.iter().sum()
    }
}

/// The per-block arithmetic shared by every execution mode.
///
/// Sets are `S = block << k | worker` (forward layout). `done[b]` records
/// `1 +` the last iteration that wrote or validated entry `b`.
struct Kernel {
    n: usize,
    k: usize,
    d: usize,
    worker: u64,
    stats: ZetaStats,
    done: Option<Vec<u32>>,
}

impl Kernel {
    fn new(layout: Layout, d: usize, worker: u64, instrument: bool) -> Self {
        Kernel {
            n: layout.n,
            k: layout.k,
            d,
            worker,
            stats: ZetaStats::new(layout.n),
            done: instrument.then(|| vec![0; layout.block_len()]),
        }
    }

    fn block_bits(&self) -> usize {
        self.n - self.k
    }

    #[inline]
    fn read(&mut self, t: &[LogScore], b: usize, j: usize) -> LogScore {
        if let Some(done) = &self.done {
            if (done[b] as usize) < j {
                self.stats.stale_reads += 1;
            }
        }
        t[b]
    }

    #[inline]
    fn touch(&mut self, b: usize, j: usize) {
        self.stats.ops += 1;
        if let Some(done) = &mut self.done {
            done[b] = j as u32 + 1;
        }
    }

    /// Keep only `|S| <= d` of the input.
    fn upward_init(&self, t: &mut [LogScore]) {
        let own = self.worker.count_ones() as usize;
        for (b, x) in t.iter_mut().enumerate() {
            if own + b.count_ones() as usize > self.d {
                *x = LOG_ZERO;
            }
        }
    }

    /// Iteration `j`: sets passing `|S ∩ {j+1..}| <= d` become
    /// `keep(t(S)) + [j ∈ S] t(S - {j})`, where `keep` drops `t(S)` once
    /// `|S ∩ {j..}| > d`. For `j < k` the `S - {j}` term is `neighbor[b]`.
    fn upward_step(&mut self, j: usize, t: &mut [LogScore], neighbor: Option<&[LogScore]>) {
        let d = self.d as i64;
        if j < self.k {
            let above = (self.worker >> (j + 1)).count_ones() as i64;
            let budget = d - above;
            if budget < 0 {
                return;
            }
            let blocks = subsets_upto(VarSet::from_bits(low_mask(self.block_bits())), budget as usize);
            match neighbor {
                None => {
                    for g in blocks {
                        self.touch(g.bits() as usize, j);
                    }
                }
                Some(nb) => {
                    for g in blocks {
                        let b = g.bits() as usize;
                        let keep = above + 1 + g.len() as i64 <= d;
                        let local = if keep { self.read(t, b, j) } else { LOG_ZERO };
                        t[b] = log_add(local, nb[b]);
                        self.touch(b, j);
                    }
                }
            }
            return;
        }
        let jb = j - self.k;
        let bit = 1usize << jb;
        let high = VarSet::from_bits(low_mask(self.block_bits()) & !low_mask(jb + 1));
        for h in subsets_upto(high, self.d) {
            let keep = h.len() < self.d;
            let h = h.bits() as usize;
            for low in (0..bit << 1).rev() {
                let b = h | low;
                if b & bit != 0 {
                    let local = if keep { self.read(t, b, j) } else { LOG_ZERO };
                    let below = self.read(t, b ^ bit, j);
                    t[b] = log_add(local, below);
                }
                self.touch(b, j);
            }
        }
    }

    /// Iteration `j`: sets passing `|S ∩ {..=j}| <= d` become
    /// `t(S) + [j ∉ S] t(S ∪ {j})`. For `j < k` the `S ∪ {j}` term is
    /// `neighbor[b]`.
    fn downward_step(&mut self, j: usize, t: &mut [LogScore], neighbor: Option<&[LogScore]>) {
        if j < self.k {
            if (self.worker & low_mask(j + 1)).count_ones() as usize > self.d {
                return;
            }
            for b in 0..t.len() {
                if let Some(nb) = neighbor {
                    let local = self.read(t, b, j);
                    t[b] = log_add(local, nb[b]);
                }
                self.touch(b, j);
            }
            return;
        }
        let own = self.worker.count_ones() as usize;
        if own > self.d {
            return;
        }
        let jb = j - self.k;
        let bit = 1usize << jb;
        let lows = subsets_upto(VarSet::from_bits(low_mask(jb + 1)), self.d - own);
        for h in 0..1usize << (self.block_bits() - jb - 1) {
            let h = h << (jb + 1);
            for low in &lows {
                let b = h | low.bits() as usize;
                if b & bit == 0 {
                    let local = self.read(t, b, j);
                    let above = self.read(t, b | bit, j);
                    t[b] = log_add(local, above);
                }
                self.touch(b, j);
            }
        }
    }

    /// Drop every `|T| > d`.
    fn downward_finish(&self, t: &mut [LogScore]) {
        self.upward_init(t);
    }
}

fn check_table(n: usize, s: &[LogScore]) {
    assert!(n < 64 && s.len() == 1usize << n, "table must hold 2^n entries");
}

/// Serial truncated upward transform of a dense table over `2^n` sets.
pub fn upward_zeta_serial(n: usize, d: usize, s: &[LogScore]) -> Vec<LogScore> {
    upward_zeta_serial_with_stats(n, d, s, false).0
}

/// [`upward_zeta_serial`] plus counters. `instrument` enables stale-read
/// tracking.
pub fn upward_zeta_serial_with_stats(
    n: usize,
    d: usize,
    s: &[LogScore],
    instrument: bool,
) -> (Vec<LogScore>, ZetaStats) {
    check_table(n, s);
    let mut kernel = Kernel::new(Layout::forward(n, 0), d, 0, instrument);
    let mut t = s.to_vec();
    kernel.upward_init(&mut t);
    for j in 0..n {
        kernel.upward_step(j, &mut t, None);
    }
    (t, kernel.stats)
}

/// Serial truncated downward transform of a dense table over `2^n` sets.
pub fn downward_zeta_serial(n: usize, d: usize, s: &[LogScore]) -> Vec<LogScore> {
    downward_zeta_serial_with_stats(n, d, low_mask(n), s, false).0
}

/// Downward transform restricted to the sub-lattice of `ground`: iterations
/// for elements outside `ground` are skipped. Equals the full transform
/// whenever `s` is `-inf` on every set that leaves `ground`.
pub fn downward_zeta_serial_with_stats(
    n: usize,
    d: usize,
    ground: u64,
    s: &[LogScore],
    instrument: bool,
) -> (Vec<LogScore>, ZetaStats) {
    check_table(n, s);
    let mut kernel = Kernel::new(Layout::forward(n, 0), d, 0, instrument);
    let mut t = s.to_vec();
    for j in 0..n {
        if ground >> j & 1 == 1 {
            kernel.downward_step(j, &mut t, None);
        }
    }
    kernel.downward_finish(&mut t);
    (t, kernel.stats)
}

/// Upward transform of this worker's forward-layout block.
///
/// For `j < k`, workers with bit `j` clear send their whole block across
/// dimension `j`, and workers with bit `j` set add it in.
pub async fn upward_zeta_worker(
    ep: &mut Endpoint,
    layout: Layout,
    d: usize,
    instance: u32,
    block: &mut [LogScore],
    instrument: bool,
) -> Result<ZetaStats, FabricError> {
    debug_assert!(!layout.mirror && layout.k == ep.dim());
    let mut kernel = Kernel::new(layout, d, ep.id(), instrument);
    kernel.upward_init(block);
    for j in 0..layout.n {
        if j < layout.k {
            let tag = Tag::new(Stage::UpwardZeta, instance, j as u64);
            if ep.bit(j) {
                let msg = ep.recv(j, tag).await?;
                kernel.upward_step(j, block, Some(&msg.payload));
            } else {
                kernel.stats.sent_per_iteration[j] += block.len() as u64;
                ep.send(j, tag, block.to_vec())?;
                kernel.upward_step(j, block, None);
            }
        } else {
            kernel.upward_step(j, block, None);
        }
    }
    ep.add_ops(kernel.stats.ops);
    Ok(kernel.stats)
}

/// Downward transform of this worker's forward-layout block over the
/// sub-lattice of `ground`.
///
/// For `j < k`, workers with bit `j` set send their whole block across
/// dimension `j`, and workers with bit `j` clear add it in.
pub async fn downward_zeta_worker(
    ep: &mut Endpoint,
    layout: Layout,
    d: usize,
    ground: u64,
    instance: u32,
    block: &mut [LogScore],
    instrument: bool,
) -> Result<ZetaStats, FabricError> {
    debug_assert!(!layout.mirror && layout.k == ep.dim());
    let mut kernel = Kernel::new(layout, d, ep.id(), instrument);
    for j in (0..layout.n).filter(|j| ground >> j & 1 == 1) {
        if j < layout.k {
            let tag = Tag::new(Stage::DownwardZeta, instance, j as u64);
            if ep.bit(j) {
                kernel.stats.sent_per_iteration[j] += block.len() as u64;
                ep.send(j, tag, block.to_vec())?;
                kernel.downward_step(j, block, None);
            } else {
                let msg = ep.recv(j, tag).await?;
                kernel.downward_step(j, block, Some(&msg.payload));
            }
        } else {
            kernel.downward_step(j, block, None);
        }
    }
    kernel.downward_finish(block);
    ep.add_ops(kernel.stats.ops);
    Ok(kernel.stats)
}

/// Split a dense `2^n` table into per-worker blocks.
pub fn scatter(layout: Layout, full: &[LogScore]) -> Vec<Vec<LogScore>> {
    assert_eq!(full.len(), 1usize << layout.n);
    (0..layout.workers() as u64)
        .map(|r| {
            (0..layout.block_len() as u64)
                .map(|b| full[layout.compose(r, b).bits() as usize])
                .collect()
        })
        .collect()
}

/// Inverse of [`scatter`].
pub fn gather(layout: Layout, blocks: &[Vec<LogScore>]) -> Vec<LogScore> {
    let mut full = vec![LOG_ZERO; 1usize << layout.n];
    for (r, block) in blocks.iter().enumerate() {
        for (b, x) in block.iter().enumerate() {
            full[layout.compose(r as u64, b as u64).bits() as usize] = *x;
        }
    }
    full
}

/// Run [`upward_zeta_worker`] on every endpoint of `fabric`.
pub fn upward_zeta_parallel(
    fabric: &mut HypercubeFabric,
    n: usize,
    d: usize,
    blocks: Vec<Vec<LogScore>>,
) -> Result<(Vec<Vec<LogScore>>, Vec<ZetaStats>), FabricError> {
    let layout = Layout::forward(n, fabric.dim());
    let out = fabric.run(blocks, |mut ep, mut block| async move {
        let stats = upward_zeta_worker(&mut ep, layout, d, 0, &mut block, false).await?;
        Ok::<_, FabricError>((block, stats))
    })?;
    Ok(out.into_iter().unzip())
}

/// Run [`downward_zeta_worker`] over the full ground set on every endpoint.
pub fn downward_zeta_parallel(
    fabric: &mut HypercubeFabric,
    n: usize,
    d: usize,
    blocks: Vec<Vec<LogScore>>,
) -> Result<(Vec<Vec<LogScore>>, Vec<ZetaStats>), FabricError> {
    let layout = Layout::forward(n, fabric.dim());
    let out = fabric.run(blocks, |mut ep, mut block| async move {
        let stats =
            downward_zeta_worker(&mut ep, layout, d, low_mask(n), 0, &mut block, false).await?;
        Ok::<_, FabricError>((block, stats))
    })?;
    Ok(out.into_iter().unzip())
}
