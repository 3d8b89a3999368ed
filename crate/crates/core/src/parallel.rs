//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) `par_map` fans out over rayon;
//! without it, it degrades to a plain iterator. Both paths collect
//! positionally, so results are identical either way. Callers must keep
//! floating-point reductions out of here: only per-item independent work or
//! integer reductions are order-stable.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, in parallel when the feature is enabled.
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Always-sequential twin of `par_map`, kept for benchmarking the two paths
/// against each other within one build.
pub fn seq_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Caps the rayon thread pool. A no-op without the `parallel` feature or if
/// a pool was already built. jobs = 0 leaves the default.
pub fn configure_jobs(jobs: usize) {
    #[cfg(feature = "parallel")]
    {
        if jobs > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_and_seq_agree() {
        let items: Vec<u64> = (0..1000).collect();
        let f = |x: &u64| x.wrapping_mul(0x9e3779b9).rotate_left(13);
        assert_eq!(par_map(&items, f), seq_map(&items, f));
    }
}
