//! Data-parallel map over independent work items.
//!
//! With the `parallel` feature, [`Execution::Parallel`] fans work out over
//! rayon's pool; without it every mode runs sequentially. Results always
//! come back in index order, so output does not depend on the mode.

/// Caps sweep parallelism when set to a positive integer.
pub const THREADS_ENV: &str = "V2VRL_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// `(0..n).map(f)` in the requested mode, in index order.
pub fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Reads [`THREADS_ENV`] and sizes the global pool accordingly.
/// Returns the thread count that was applied, if any.
pub fn configure_threads_from_env() -> Option<usize> {
    let n: usize = std::env::var(THREADS_ENV).ok()?.trim().parse().ok()?;
    if n == 0 {
        return None;
    }
    #[cfg(feature = "parallel")]
    {
        // Fails only if the global pool already exists; keep that pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Some(n)
}
