//! Execution-schedule abstraction.
//!
//! Client training and per-user evaluation are data-parallel; everything they
//! compute is keyed by content (round, client id, user id), never by thread,
//! so the results are bit-identical whichever schedule runs them. With the
//! `parallel` feature (default) the work fans out over a rayon pool; without
//! it, or with [`Parallelism::Sequential`], it runs on the calling thread.

/// How data-parallel sections execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    /// Run everything on the calling thread.
    Sequential,
    /// Run on a rayon pool with the given thread count (0 = rayon's default).
    /// Falls back to sequential when the `parallel` feature is disabled.
    Threads(usize),
}

impl Default for Parallelism {
    fn default() -> Self {
        Parallelism::Threads(0)
    }
}

/// Maps `f` over `items`, preserving input order in the output.
#[cfg(feature = "parallel")]
pub fn map_collect<T, R, F>(mode: Parallelism, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    match mode {
        Parallelism::Sequential => items.iter().map(f).collect(),
        Parallelism::Threads(0) => items.par_iter().map(f).collect(),
        Parallelism::Threads(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("failed to build thread pool");
            pool.install(|| items.par_iter().map(f).collect())
        }
    }
}

/// Sequential fallback used when the `parallel` feature is disabled.
#[cfg(not(feature = "parallel"))]
pub fn map_collect<T, R, F>(_mode: Parallelism, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let items: Vec<u64> = (0..100).collect();
        let seq = map_collect(Parallelism::Sequential, &items, |x| x * 3);
        let par = map_collect(Parallelism::Threads(4), &items, |x| x * 3);
        assert_eq!(seq, par);
        assert_eq!(seq[10], 30);
    }
}
