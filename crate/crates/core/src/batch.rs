//! Per-seed fan-out with results returned in seed order.

use rayon::prelude::*;

use crate::error::Result;

/// Run `f` for `seeds` on the rayon pool. Output order matches input order, so
/// any later reduction is independent of scheduling.
pub fn map_seeds<T, F>(seeds: &[u64], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    seeds.par_iter().map(|&s| f(s)).collect()
}

/// Seeds `base, base + 1, ..., base + n - 1`.
pub fn seed_block(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| base.wrapping_add(i)).collect()
}
