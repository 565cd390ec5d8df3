//! Parallel map helpers with a sequential fallback.
//!
//! All data-parallel sweeps in the crate go through [`map`], which uses
//! rayon when the `parallel` feature is enabled and a plain loop
//! otherwise. [`map_seq`] is always the sequential path, kept public so
//! benchmarks can compare both.

/// Sequential map, always available.
pub fn map_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    items.iter().map(f).collect()
}

/// Data-parallel map (rayon) when the `parallel` feature is on,
/// sequential otherwise. Output order matches input order either way.
#[cfg(feature = "parallel")]
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    map_seq(items, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 0.01).collect();
        let f = |x: &f64| x.sin() * x.cos();
        assert_eq!(map(&xs, f), map_seq(&xs, f));
    }
}
