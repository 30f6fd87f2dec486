//! Data-parallel map over an index range, with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over the rayon pool;
//! without it, or when [`Execution::Sequential`] is requested, the same
//! closure runs in index order. Output order is always index order, so the
//! two paths produce identical results.

use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run in parallel.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

pub fn map_range<T, F>(exec: Execution, range: Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            range.into_par_iter().map(f).collect()
        }
        _ => range.map(f).collect(),
    }
}

/// Configure the global worker pool from `PROFILELAB_THREADS`, if set.
/// Returns the number of threads requested, if any.
pub fn init_threads_from_env() -> Option<usize> {
    let threads = std::env::var("PROFILELAB_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)?;
    #[cfg(feature = "parallel")]
    {
        // Fails only if the pool was already built; the existing pool stays.
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
    fn both_paths_agree_in_order() {
        let f = |i: u64| i * i + 1;
        assert_eq!(
            map_range(Execution::Sequential, 0..1000, f),
            map_range(Execution::Parallel, 0..1000, f)
        );
    }
}
