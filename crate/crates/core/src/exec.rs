//! Index-ordered map over path indices, parallel when the `parallel`
//! feature is enabled.
//!
//! Results are always returned in index order so that any subsequent
//! reduction is independent of how work was scheduled.

/// Evaluates `f(0), ..., f(n - 1)` and returns the results in order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n as u64).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n as u64).map(f).collect()
    }
}

/// Whether this build evaluates [`map_indexed`] on a thread pool.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
