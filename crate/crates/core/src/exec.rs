//! Batch execution helpers.
//!
//! With the `parallel` feature (the default) batch maps run on rayon;
//! without it they fall back to plain iterators. Output order always matches
//! input order. The `_seq` twins stay available so benchmarks can compare
//! both paths in one build.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over the slice, in parallel when enabled.
pub fn map_batch<T, U, F>(items: &[T], f: F) -> Vec<U>
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

/// Sequential twin of [`map_batch`].
pub fn map_batch_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Maps `f` over `0..n`, in parallel when enabled.
pub fn map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
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

/// Sequential twin of [`map_indices`].
pub fn map_indices_seq<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Runs `f` inside a thread pool capped at `jobs` workers. `None` uses the
/// global pool; without the `parallel` feature the cap is moot and `f` runs
/// inline.
#[cfg(feature = "parallel")]
pub fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match jobs {
        Some(n) if n >= 1 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool builds")
            .install(f),
        _ => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_jobs<R>(_jobs: Option<usize>, f: impl FnOnce() -> R) -> R {
    f()
}

/// SplitMix64 seed derivation so per-item streams stay independent and
/// reproducible.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9e3779b97f4a7c15_u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let xs: Vec<u64> = (0..1000).collect();
        let doubled = map_batch(&xs, |x| x * 2);
        assert_eq!(doubled, map_batch_seq(&xs, |x| x * 2));
        assert_eq!(map_indices(5, |i| i), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn derived_seeds_differ_per_index() {
        let a = derive_seed(7, 0);
        let b = derive_seed(7, 1);
        assert_ne!(a, b);
        assert_eq!(a, derive_seed(7, 0));
    }

    #[test]
    fn with_jobs_runs_the_closure() {
        assert_eq!(with_jobs(Some(2), || 41 + 1), 42);
        assert_eq!(with_jobs(None, || 1), 1);
    }
}
