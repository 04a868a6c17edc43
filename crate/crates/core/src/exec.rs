//! Execution policy for the data-parallel loops (collineation enumeration,
//! Monte Carlo replication).
//!
//! With the `parallel` feature the loops run on rayon's pool; without it
//! every policy degrades to the sequential path. Both paths must produce
//! identical results, which the tests and benches rely on.

/// How an enumeration or simulation loop is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True when this policy actually fans out work in this build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Map `f` over `0..len` and collect in index order.
pub(crate) fn map_indexed<T, F>(exec: Exec, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..len).map(f).collect()
}

/// First `Some` result in index order over `items`.
pub(crate) fn find_map_first<I, T, F>(exec: Exec, items: &[I], f: F) -> Option<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> Option<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().find_map_first(f);
    }
    let _ = exec;
    items.iter().find_map(f)
}
