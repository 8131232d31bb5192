//! Data-parallel fan-out over independent work items (trajectories).
//!
//! With the `parallel` feature the work runs on a rayon pool; without it, or
//! with [`Execution::Sequential`], items run in index order on the calling
//! thread. Results are always returned sorted by index, so aggregation is
//! independent of scheduling.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// `f(0), f(1), …, f(n - 1)`, in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..n).map(f).collect(),
            Execution::Parallel => parallel_map(n, f),
        }
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Size the global pool from `CHCBF_THREADS` if set. Safe to call more than
/// once; only the first successful call has an effect.
pub fn configure_threads_from_env() -> Option<usize> {
    let threads = std::env::var("CHCBF_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)?;
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    Some(threads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree() {
        let f = |i: usize| (i as f64).sqrt();
        assert_eq!(
            Execution::Sequential.map(100, f),
            Execution::Parallel.map(100, f)
        );
    }
}
