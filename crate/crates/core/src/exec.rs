//! Data-parallel map over independent work items.
//!
//! With the `parallel` feature the map runs on the ambient rayon pool;
//! without it, items are processed in order on the calling thread. Results
//! always come back in input order, so callers reduce them deterministically.

#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Whether this build distributes work over a thread pool.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
