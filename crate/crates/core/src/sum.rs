//! Fixed-order pairwise accumulation.
//!
//! Every reduction over records goes through [`pairwise_accumulate`], which
//! splits the index range in halves down to blocks of [`LEAF`] items. The
//! tree shape depends only on the item count, so results are reproducible
//! regardless of how callers schedule the work.

use alloc::vec;
use alloc::vec::Vec;

pub const LEAF: usize = 8;

/// Sums `width`-dimensional contributions of items `0..n`. `add(j, acc)` must
/// add item `j`'s contribution into `acc`.
pub fn pairwise_accumulate<F>(n: usize, width: usize, add: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]),
{
    let mut out = vec![0.0; width];
    accumulate_range(0, n, &add, &mut out);
    out
}

fn accumulate_range<F>(lo: usize, hi: usize, add: &F, out: &mut [f64])
where
    F: Fn(usize, &mut [f64]),
{
    if hi - lo <= LEAF {
        for j in lo..hi {
            add(j, out);
        }
        return;
    }
    let mid = lo + (hi - lo) / 2;
    accumulate_range(lo, mid, add, out);
    let mut right = vec![0.0; out.len()];
    accumulate_range(mid, hi, add, &mut right);
    for (o, r) in out.iter_mut().zip(right) {
        *o += r;
    }
}

/// Pairwise sum of a slice.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise sum of `f(j)` over the indices in `items`.
pub fn pairwise_sum_by<F: Fn(usize) -> f64>(items: &[usize], f: F) -> f64 {
    fn go<F: Fn(usize) -> f64>(items: &[usize], f: &F) -> f64 {
        if items.len() <= LEAF {
            return items.iter().map(|&j| f(j)).sum();
        }
        let mid = items.len() / 2;
        go(&items[..mid], f) + go(&items[mid..], f)
    }
    go(items, &f)
}
