//! Log-domain arithmetic.
//!
//! Every score in this crate is a natural logarithm. Zero is `-inf`, products
//! are additions, and sums go through [`log_add`].

/// A probability or weight stored as its natural logarithm.
pub type LogScore = f64;

/// `log 0`.
pub const LOG_ZERO: LogScore = f64::NEG_INFINITY;

/// `log(exp(a) + exp(b))`.
///
/// Exactly commutative, and `log_add(x, LOG_ZERO) == x` bit for bit, so a
/// fold that starts from `LOG_ZERO` reproduces its first term unchanged.
#[inline]
pub fn log_add(a: LogScore, b: LogScore) -> LogScore {
    if a == LOG_ZERO {
        return b;
    }
    if b == LOG_ZERO {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Left-to-right fold of [`log_add`].
pub fn log_sum<I: IntoIterator<Item = LogScore>>(terms: I) -> LogScore {
    terms.into_iter().fold(LOG_ZERO, log_add)
}

/// `log(sum(exp(x)))` with a single max shift. Used where the accumulation
/// order should differ from the pairwise [`log_add`] chain.
pub fn log_sum_exp(values: &[LogScore]) -> LogScore {
    let max = values.iter().copied().fold(LOG_ZERO, f64::max);
    if max == LOG_ZERO || max.is_infinite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Relative difference of two log-domain values once exponentiated,
/// `|exp(a - b) - 1|`, with equal infinities counting as zero.
pub fn rel_diff(a: LogScore, b: LogScore) -> f64 {
    if a == b {
        return 0.0;
    }
    ((a - b).abs()).exp_m1()
}
