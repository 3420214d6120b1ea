//! Data-parallel helpers with a sequential fallback.
//!
//! Every parallel loop in the crate goes through [`map_indexed`] so that
//! results are gathered in input order and the output is independent of the
//! worker count. Building with `--no-default-features` removes the rayon
//! dependency and all loops run sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
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

/// Sequential twin of [`map_indexed`], kept available under all feature sets
/// so benchmarks can compare both code paths in one binary.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Configure the global worker pool. A no-op in sequential builds.
pub fn set_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        // Ignore the error if a pool already exists (e.g. in tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let a = map_indexed(1000, |i| i * i);
        let b = map_indexed_seq(1000, |i| i * i);
        assert_eq!(a, b);
    }
}
