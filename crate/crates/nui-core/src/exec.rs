//! Job execution: data-parallel via rayon when the `parallel` feature is
//! enabled, plain sequential iteration otherwise.
//!
//! Results are always collected in input order, so the job count never
//! changes the output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items` with up to `jobs` workers.
///
/// `jobs <= 1` always takes the sequential path, even in parallel builds.
#[cfg(feature = "parallel")]
pub fn run_jobs<T, U, F>(items: Vec<T>, jobs: usize, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    if jobs <= 1 || items.len() <= 1 {
        return items.into_iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("failed to build worker pool");
    pool.install(|| items.into_par_iter().map(f).collect())
}

/// Sequential fallback used when the `parallel` feature is disabled.
#[cfg(not(feature = "parallel"))]
pub fn run_jobs<T, U, F>(items: Vec<T>, _jobs: usize, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    items.into_iter().map(f).collect()
}
