//! Data-parallel execution helpers.
//!
//! Sweeps in this crate are embarrassingly parallel over independent cells
//! (replicates, grid points, ensemble members). Each cell owns a derived RNG
//! stream, so the result of [`map_indexed`] is a pure function of its inputs
//! and identical whether it runs on one thread or many. The `parallel`
//! feature (on by default) backs it with rayon; without the feature the same
//! API falls back to the sequential path.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential variant of [`map_indexed`], always available.
///
/// Exists so benchmarks can compare the two execution paths within a single
/// build, and as the fallback used when the `parallel` feature is disabled.
pub fn map_indexed_seq<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

/// Cap the global rayon pool at `threads` workers. No-op without `parallel`.
///
/// Must be called before the first parallel task; later calls return an error
/// from rayon which we surface to the caller as a plain message.
pub fn limit_threads(threads: usize) -> Result<(), String> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| e.to_string())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Ok(())
    }
}
