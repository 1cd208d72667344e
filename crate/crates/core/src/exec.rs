//! Parallel execution helpers with a sequential fallback.
//!
//! All parallelism in this crate runs through [`map_indexed`]: independent
//! work items are mapped by index and collected in index order, so results
//! are bitwise identical whether the work ran on one thread or many. With
//! the `parallel` feature disabled the same API compiles to plain
//! sequential iteration.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n` and collects results in index order.
///
/// Runs on the rayon pool when `parallel` is true and the feature is
/// enabled; otherwise sequentially.
pub fn map_indexed<T, F>(n: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if parallel && n > 1 {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = parallel;
    (0..n).map(f).collect()
}

/// Whether this build can actually run work in parallel.
pub fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_index_order() {
        let seq = map_indexed(100, false, |i| i * i);
        let par = map_indexed(100, true, |i| i * i);
        assert_eq!(seq, par);
    }
}
