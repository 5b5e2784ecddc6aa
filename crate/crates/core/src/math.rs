//! Small numeric and randomness helpers.

use rand::Rng;

use crate::scalar::Real;

/// Numerically stable `log(sum(exp(x_i)))` via the shift-by-max trick.
///
/// Returns negative infinity for an empty slice or when every entry is
/// negative infinity (the log of an empty/zero sum).
pub fn log_sum_exp<T: Real>(values: &[T]) -> T {
    let max = values
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    if !max.is_finite() {
        // Either empty, all -inf, or a +inf entry dominates.
        return max;
    }
    let sum: T = values.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Derives an independent stream seed from a base seed and a stream index.
///
/// SplitMix64 finalizer over the combined value; distinct streams give
/// uncorrelated ChaCha states while staying reproducible from one seed.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut x = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Draws an index from a probability vector.
///
/// `weights` is assumed to sum to one up to validation tolerance; the
/// fallback for accumulated rounding is the last index with positive
/// weight, so zero-probability entries are never produced.
pub fn sample_index<T: Real, R: Rng + ?Sized>(weights: &[T], rng: &mut R) -> usize {
    debug_assert!(!weights.is_empty());
    let u = rng.random::<f64>();
    let mut cum = 0.0_f64;
    let mut last_positive = 0;
    for (i, w) in weights.iter().enumerate() {
        let w = w.to_f64().unwrap_or(0.0);
        if w > 0.0 {
            last_positive = i;
            cum += w;
            if u < cum {
                return i;
            }
        }
    }
    last_positive
}
