//! Subsets of the variable domain as machine-word bitmasks.
//!
//! Variable `i` (0-based) lives in bit `i`, counting from the least
//! significant bit. A bit string is written most-significant position first,
//! so the set `{0, 1}` over three variables prints as `011`.
//!
//! The same convention names hypercube workers: with `2^k` workers, the low
//! `k` bits of a set select its worker and the remaining `n - k` high bits
//! select its block (the sub-hypercube it belongs to).

use std::fmt;

/// Largest supported domain. A set must fit in one `u64`.
pub const MAX_VARS: usize = 64;

/// A subset of `{0, .., n-1}` encoded as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct VarSet(u64);

impl VarSet {
    pub const EMPTY: VarSet = VarSet(0);

    #[inline]
    pub const fn from_bits(bits: u64) -> Self {
        VarSet(bits)
    }

    #[inline]
    pub const fn bits(self) -> u64 {
        self.0
    }

    /// The whole domain `{0, .., n-1}`.
    #[inline]
    pub fn full(n: usize) -> Self {
        VarSet(low_mask(n))
    }

    #[inline]
    pub fn singleton(i: usize) -> Self {
        debug_assert!(i < MAX_VARS);
        VarSet(1 << i)
    }

    /// Cardinality of the set, which is also its level in the subset lattice.
    #[inline]
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    #[inline]
    pub fn contains(self, i: usize) -> bool {
        i < MAX_VARS && self.0 >> i & 1 == 1
    }

    #[inline]
    pub fn with(self, i: usize) -> Self {
        VarSet(self.0 | 1 << i)
    }

    #[inline]
    pub fn without(self, i: usize) -> Self {
        VarSet(self.0 & !(1 << i))
    }

    #[inline]
    pub fn union(self, other: VarSet) -> Self {
        VarSet(self.0 | other.0)
    }

    #[inline]
    pub fn intersection(self, other: VarSet) -> Self {
        VarSet(self.0 & other.0)
    }

    #[inline]
    pub fn difference(self, other: VarSet) -> Self {
        VarSet(self.0 & !other.0)
    }

    #[inline]
    pub fn is_subset_of(self, other: VarSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// `V - self` for a domain of size `n`.
    #[inline]
    pub fn complement(self, n: usize) -> Self {
        VarSet(!self.0 & low_mask(n))
    }

    /// Members in ascending order.
    pub fn iter(self) -> Members {
        Members(self.0)
    }

    /// The set as an `n`-character bit string, highest position first.
    pub fn bit_string(self, n: usize) -> String {
        bit_string(self.0, n)
    }
}

impl fmt::Debug for VarSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl FromIterator<usize> for VarSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        iter.into_iter().fold(VarSet::EMPTY, VarSet::with)
    }
}

impl IntoIterator for VarSet {
    type Item = usize;
    type IntoIter = Members;

    fn into_iter(self) -> Members {
        self.iter()
    }
}

/// Ascending iterator over the members of a [`VarSet`].
#[derive(Clone, Debug)]
pub struct Members(u64);

impl Iterator for Members {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let i = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(i)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let c = self.0.count_ones() as usize;
        (c, Some(c))
    }
}

impl ExactSizeIterator for Members {}

/// Mask with the low `width` bits set.
#[inline]
pub fn low_mask(width: usize) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// Render the low `width` bits of `bits`, highest position first.
pub fn bit_string(bits: u64, width: usize) -> String {
    (0..width)
        .rev()
        .map(|i| if bits >> i & 1 == 1 { '1' } else { '0' })
        .collect()
}

/// Every subset of `base` with at most `d` members, ordered by cardinality
/// and then by ascending bit value.
pub fn subsets_upto(base: VarSet, d: usize) -> Vec<VarSet> {
    let positions: Vec<usize> = base.iter().collect();
    let width = positions.len();
    let mut out = Vec::new();
    for c in 0..=d.min(width) {
        // Gosper's hack walks c-subsets of the compressed positions in
        // ascending order; depositing into `base` is monotone.
        if c == 0 {
            out.push(VarSet::EMPTY);
            continue;
        }
        let mut x: u64 = low_mask(c);
        let limit = if width >= 64 { u64::MAX } else { 1u64 << width };
        while x < limit {
            out.push(deposit(x, &positions));
            let low = x & x.wrapping_neg();
            let ripple = x.wrapping_add(low);
            if ripple == 0 {
                break;
            }
            x = (((x ^ ripple) >> 2) / low) | ripple;
        }
    }
    out
}

fn deposit(compressed: u64, positions: &[usize]) -> VarSet {
    VarSet::from_iter(
        positions
            .iter()
            .enumerate()
            .filter(|(r, _)| compressed >> r & 1 == 1)
            .map(|(_, &p)| p),
    )
}

/// Number of subsets of an `m`-set with at most `d` members.
pub fn count_upto(m: usize, d: usize) -> u64 {
    (0..=d.min(m)).map(|c| binomial(m, c)).sum()
}

pub fn binomial(m: usize, c: usize) -> u64 {
    if c > m {
        return 0;
    }
    let c = c.min(m - c);
    let mut acc: u64 = 1;
    for t in 0..c {
        acc = acc * (m - t) as u64 / (t + 1) as u64;
    }
    acc
}

/// Where a subset lives on a `2^k`-worker hypercube.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HypercubeAddress {
    /// `k`-bit worker id.
    pub worker: u64,
    /// `(n - k)`-bit index of the sub-hypercube, i.e. the high bits of the set.
    pub block: u64,
}

/// How the `2^n` subsets are spread over `2^k` workers.
///
/// The forward layout assigns a set to the worker named by its low `k` bits.
/// The mirrored layout uses the complement of those bits, so the set `S` sits
/// on the same worker as `V - S` does under the forward layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Layout {
    pub n: usize,
    pub k: usize,
    pub mirror: bool,
}

impl Layout {
    pub fn forward(n: usize, k: usize) -> Self {
        assert!(k <= n && n < MAX_VARS, "layout needs k <= n < 64");
        Layout { n, k, mirror: false }
    }

    pub fn mirrored(n: usize, k: usize) -> Self {
        Layout {
            mirror: true,
            ..Layout::forward(n, k)
        }
    }

    #[inline]
    pub fn workers(&self) -> usize {
        1 << self.k
    }

    /// Entries held by each worker.
    #[inline]
    pub fn block_len(&self) -> usize {
        1 << (self.n - self.k)
    }

    #[inline]
    pub fn worker_mask(&self) -> u64 {
        low_mask(self.k)
    }

    #[inline]
    pub fn block_mask(&self) -> u64 {
        low_mask(self.n - self.k)
    }

    #[inline]
    pub fn split(&self, s: VarSet) -> HypercubeAddress {
        split_address(s, self.k, self.mirror)
    }

    /// Inverse of [`Layout::split`].
    #[inline]
    pub fn compose(&self, worker: u64, block: u64) -> VarSet {
        let low = if self.mirror {
            !worker & self.worker_mask()
        } else {
            worker
        };
        VarSet::from_bits(block << self.k | low)
    }

    /// The low `k` bits shared by every set held on `worker`.
    #[inline]
    pub fn low_bits(&self, worker: u64) -> u64 {
        self.compose(worker, 0).bits()
    }
}

/// Split a set into worker id and block index. With `mirror` the worker id is
/// the bitwise complement of the low `k` bits.
#[inline]
pub fn split_address(s: VarSet, k: usize, mirror: bool) -> HypercubeAddress {
    let mask = low_mask(k);
    let low = s.bits() & mask;
    HypercubeAddress {
        worker: if mirror { !low & mask } else { low },
        block: if k >= 64 { 0 } else { s.bits() >> k },
    }
}
