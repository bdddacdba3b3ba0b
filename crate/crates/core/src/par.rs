//! Data-parallel helpers with a sequential fallback.
//!
//! Hot loops (per-user encoding, per-node aggregation, per-example forward
//! passes) go through [`map_indexed`], which fans out over rayon when the
//! `parallel` feature is enabled. Outputs are collected in index order and
//! every closure is pure, so results are bit-identical to the sequential
//! path regardless of thread count.
//!
//! [`force_sequential`] is a runtime override used by the benchmark suite to
//! compare both paths inside one binary; it also lets a caller pin the whole
//! pipeline to one core without rebuilding.

use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Forces [`map_indexed`] onto the sequential path at runtime.
pub fn force_sequential(on: bool) {
    FORCE_SEQUENTIAL.store(on, Ordering::Relaxed);
}

/// True when the next [`map_indexed`] call would run sequentially.
pub fn is_sequential() -> bool {
    if cfg!(not(feature = "parallel")) {
        return true;
    }
    FORCE_SEQUENTIAL.load(Ordering::Relaxed)
}

/// Maps `f` over `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !FORCE_SEQUENTIAL.load(Ordering::Relaxed) {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    map_indexed_seq(n, f)
}

/// Sequential twin of [`map_indexed`]; always single-threaded.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let f = |i: usize| (i as f64).sqrt() * 3.0 - (i as f64) / 7.0;
        assert_eq!(map_indexed(1000, f), map_indexed_seq(1000, f));
    }

    #[test]
    fn order_is_preserved() {
        let out = map_indexed(256, |i| i);
        assert!(out.iter().enumerate().all(|(i, &v)| i == v));
    }
}
