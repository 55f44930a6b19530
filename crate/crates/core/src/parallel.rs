//! Data-parallel map over independent work items.
//!
//! With the `parallel` feature (on by default) work runs on a rayon pool;
//! without it, or with [`Execution::Sequential`], it runs in order on the
//! calling thread. Results always come back in index order, so output does
//! not depend on scheduling.

/// How to spread independent work items.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// `jobs: None` uses rayon's global pool.
    #[default]
    Parallel,
    ParallelWith { jobs: usize },
}

impl Execution {
    /// `--jobs`-style selection: `1` is sequential, `0`/absent the default pool.
    pub fn from_jobs(jobs: Option<usize>) -> Self {
        match jobs {
            Some(1) => Execution::Sequential,
            Some(0) | None => Execution::Parallel,
            Some(j) => Execution::ParallelWith { jobs: j },
        }
    }
}

/// `(0..n).map(f)` under the requested execution mode.
pub fn map_indices<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..n).map(f).collect(),
        Execution::Parallel => par_map(n, f),
        Execution::ParallelWith { jobs } => with_pool(jobs, || par_map(n, f)),
    }
}

#[cfg(feature = "parallel")]
fn par_map<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
fn with_pool<T: Send>(jobs: usize, op: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(op),
        Err(e) => {
            log::warn!("could not build a {jobs}-thread pool ({e}); using the global pool");
            op()
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn with_pool<T: Send>(_jobs: usize, op: impl FnOnce() -> T + Send) -> T {
    op()
}
