//! Deterministic reductions.
//!
//! Every sum in the library goes through the fixed-block scheme below: the
//! input is cut into blocks of [`BLOCK`] elements, each block is summed
//! left-to-right, and the block partials are folded left-to-right. Block
//! boundaries depend only on the input length, so the result is bitwise
//! identical whether the block partials are computed sequentially or on a
//! rayon pool of any size. This is what makes `--threads` a no-op for output
//! bytes.

use rayon::prelude::*;

const BLOCK: usize = 1024;

/// Minimum length before block partials are farmed out to rayon. Below this
/// the dispatch overhead dominates on small grids.
const PAR_MIN: usize = 1 << 15;

fn block_sums<F>(len: usize, eval: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync,
{
    let nblocks = len.div_ceil(BLOCK);
    let one = |b: usize| {
        let start = b * BLOCK;
        let end = (start + BLOCK).min(len);
        let mut acc = 0.0;
        for i in start..end {
            acc += eval(i);
        }
        acc
    };
    if len >= PAR_MIN && rayon::current_num_threads() > 1 {
        (0..nblocks).into_par_iter().map(one).collect()
    } else {
        (0..nblocks).map(one).collect()
    }
}

/// Sum of `f(i)` over `0..len`, fixed reduction order.
pub fn sum_with<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    block_sums(len, f).iter().sum()
}

/// Sum of a slice, fixed reduction order.
pub fn sum(a: &[f64]) -> f64 {
    sum_with(a.len(), |i| a[i])
}

/// Dot product with fixed reduction order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot: length mismatch");
    sum_with(a.len(), |i| a[i] * b[i])
}

/// Maximum of `f(i)` over `0..len`; `-inf` for empty input. Max is
/// order-independent, so no blocking is needed, but NaN must not poison the
/// result silently: NaN entries propagate (callers check finiteness).
pub fn max_with<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64,
{
    let mut m = f64::NEG_INFINITY;
    for i in 0..len {
        let v = f(i);
        if v > m || v.is_nan() {
            m = v;
        }
    }
    m
}
