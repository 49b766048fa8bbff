//! Execution helper for data-parallel loops.
//!
//! `ordered_map` evaluates a function over a slice and returns the results in
//! input order. With the `parallel` feature it fans out on the rayon pool;
//! without it it is a plain iterator map. Callers that need a scalar fold the
//! returned vector sequentially, so results never depend on thread count or
//! on whether the feature is enabled.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub(crate) fn ordered_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn ordered_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Configures the global rayon pool to `n` threads (0 = library default).
///
/// Returns whether the request took effect; the pool can only be built once
/// per process, later calls are ignored. Without the `parallel` feature this
/// is a no-op that reports `false`.
pub fn configure_threads(n: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        if n == 0 {
            return true;
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        false
    }
}
