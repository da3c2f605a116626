//! Replication-parallel Monte Carlo driver.
//!
//! Replication `k` always draws from stream `(seed, k)` and results are
//! gathered in index order, so aggregates do not depend on the thread count.

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::rng::StreamKey;

/// Run `f` for replications `0..reps` in parallel; results come back in
/// replication order.
pub fn replicate<T, F>(reps: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(StreamKey) -> T + Sync + Send,
{
    (0..reps as u64)
        .into_par_iter()
        .map(|k| f(StreamKey::new(seed, k)))
        .collect()
}

/// Fallible variant of [`replicate`]; the first error in index order wins.
pub fn try_replicate<T, F>(reps: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(StreamKey) -> Result<T> + Sync + Send,
{
    replicate(reps, seed, f).into_iter().collect()
}

/// Run `f` inside a dedicated pool with `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}
