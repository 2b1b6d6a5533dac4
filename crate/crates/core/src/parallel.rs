//! Thin wrappers around the data-parallel inner loops.
//!
//! With the `parallel` feature (the default) the hot per-node maps run on
//! rayon; without it they compile to plain loops. Every kernel computes each
//! output element independently of scheduling and all reductions stay
//! sequential, so results are bitwise identical for any thread count and for
//! both lanes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fills `out[k] = f(k)`.
pub fn fill_indexed<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.par_iter_mut()
        .enumerate()
        .for_each(|(k, slot)| *slot = f(k));
    #[cfg(not(feature = "parallel"))]
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = f(k);
    }
}

/// Always-sequential variant of [`fill_indexed`], kept as the reference lane
/// for the benches.
pub fn fill_indexed_seq<T, F>(out: &mut [T], f: F)
where
    F: Fn(usize) -> T,
{
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = f(k);
    }
}

/// Maps `f` over a slice, preserving order.
pub fn map_slice<T, U, F>(input: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        input.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        input.iter().map(f).collect()
    }
}

/// Runs `job` on a pool with the requested thread count; `None` keeps the
/// default pool. Without the `parallel` feature the count is ignored and the
/// job runs inline.
pub fn with_threads<R: Send>(threads: Option<usize>, job: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        match threads {
            Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("building a rayon pool cannot fail for positive thread counts")
                .install(job),
            _ => job(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        job()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_matches_sequential() {
        let mut a = vec![0usize; 1000];
        let mut b = vec![0usize; 1000];
        fill_indexed(&mut a, |k| k * k + 1);
        fill_indexed_seq(&mut b, |k| k * k + 1);
        assert_eq!(a, b);
    }

    #[test]
    fn map_preserves_order() {
        let input: Vec<i64> = (0..257).collect();
        let out = map_slice(&input, |&x| 2 * x);
        assert!(out.iter().enumerate().all(|(k, &v)| v == 2 * k as i64));
    }

    #[test]
    fn with_threads_runs_job() {
        assert_eq!(with_threads(Some(2), || 7), 7);
        assert_eq!(with_threads(None, || 8), 8);
    }
}
