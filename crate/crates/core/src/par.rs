//! Data-parallel helpers.
//!
//! Every parallel loop in the crate goes through [`map_indexed`] or
//! [`map_chunks`]. With the `parallel` feature enabled (the default) the work
//! is distributed with rayon; otherwise, or when [`Exec::Sequential`] is
//! requested, it runs on the calling thread. Results are always returned in
//! index order so reductions are deterministic regardless of worker count.

use serde::{Deserialize, Serialize};

/// Execution mode for data-parallel loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True when this mode actually distributes work across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_indexed<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if exec.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Splits `0..n` into fixed-size chunks, evaluates `f(start, end)` per chunk
/// and returns the chunk results in order. The chunk layout depends only on
/// `n` and `chunk`, never on the number of threads.
pub fn map_chunks<T, F>(exec: Exec, n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let count = n.div_ceil(chunk);
    map_indexed(exec, count, |c| {
        let start = c * chunk;
        f(start, (start + chunk).min(n))
    })
}

/// Configures the global rayon pool. Returns `false` when the pool was
/// already initialised or the crate was built without `parallel`.
pub fn set_workers(workers: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        return rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .is_ok();
    }
    #[allow(unreachable_code)]
    {
        let _ = workers;
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let a = map_indexed(Exec::Sequential, 1000, |i| (i * i) as u64);
        let b = map_indexed(Exec::Parallel, 1000, |i| (i * i) as u64);
        assert_eq!(a, b);
    }

    #[test]
    fn chunks_cover_range() {
        let sums = map_chunks(Exec::Parallel, 10, 3, |s, e| (s..e).sum::<usize>());
        assert_eq!(sums, vec![3, 12, 21, 9]);
        assert!(map_chunks(Exec::Sequential, 0, 3, |s, e| e - s).is_empty());
    }
}
