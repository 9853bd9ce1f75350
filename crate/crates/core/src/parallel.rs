//! Replica fan-out.
//!
//! Every replica is a pure function of its id, so results are collected in id
//! order and never depend on the number of workers. With the `parallel`
//! feature the map runs on rayon; without it, on the calling thread.

use std::ops::Range;

use crate::error::{Error, Result};

/// Environment variable that overrides the worker count.
pub const WORKERS_ENV: &str = "CONTACTLAB_WORKERS";

/// Map `f` over replica ids, returning results in id order.
pub fn map_replicas<T, F>(ids: Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        ids.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ids.map(f).collect()
    }
}

/// Fallible [`map_replicas`]. On failure the error of the lowest failing id is
/// returned, whatever order the workers finished in.
pub fn try_map_replicas<T, F>(ids: Range<u64>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    map_replicas(ids, f).into_iter().collect()
}

/// Sequential reference for [`map_replicas`], used by benches and tests.
pub fn map_replicas_sequential<T, F>(ids: Range<u64>, f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    ids.map(f).collect()
}

/// Worker count from an explicit request, then [`WORKERS_ENV`], else `None`
/// (library default).
pub fn resolve_workers(requested: Option<usize>) -> Result<Option<usize>> {
    if let Some(n) = requested {
        return check_workers(n).map(Some);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::input(format!("{WORKERS_ENV}={v:?} is not a worker count")))?;
            check_workers(n).map(Some)
        }
        Err(_) => Ok(None),
    }
}

fn check_workers(n: usize) -> Result<usize> {
    if n == 0 {
        Err(Error::input("worker count must be at least 1"))
    } else {
        Ok(n)
    }
}

/// Run `f` with `workers` threads available to [`map_replicas`].
pub fn with_workers<R, F>(workers: Option<usize>, f: F) -> Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        match workers {
            None => Ok(f()),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::input(format!("cannot start {n} workers: {e}")))?;
                Ok(pool.install(f))
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        Ok(f())
    }
}
