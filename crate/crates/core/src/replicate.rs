//! Replicate-parallel execution with index-ordered results.

use rayon::prelude::*;

/// Evaluates `f(i)` for `i in 0..n` on the current rayon pool and returns the
/// results in index order, so any reduction over them is independent of the
/// number of workers.
pub fn map_replicates<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

/// Like [`map_replicates`] for fallible replicates; the first error by index
/// wins.
pub fn try_map_replicates<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(u64) -> Result<T, E> + Sync + Send,
{
    map_replicates(n, f).into_iter().collect()
}
