//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) the helpers fan work out
//! over rayon's global pool. Results are always collected in index order,
//! and callers reduce them sequentially, so outputs are bit-identical to the
//! sequential path. [`set_parallel`] switches between the two at runtime;
//! the benches use it to compare them.

use std::sync::atomic::{AtomicBool, Ordering};

static PARALLEL: AtomicBool = AtomicBool::new(true);

/// Enables or disables the parallel path at runtime. No effect without the
/// `parallel` feature.
pub fn set_parallel(on: bool) {
    PARALLEL.store(on, Ordering::Relaxed);
}

pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel") && PARALLEL.load(Ordering::Relaxed)
}

/// `(0..n).map(f)` collected in order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() && n > 1 {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// `items.iter().map(f)` collected in order.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    map_indexed(items.len(), |i| f(&items[i]))
}
