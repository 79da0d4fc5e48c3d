//! Data-parallel map helpers.
//!
//! Every parallel loop in the crate goes through [`map`] / [`try_map`]. With the
//! `parallel` feature enabled they fan out over rayon's pool; without it (or
//! inside [`serial`]) they run in index order on the calling thread. Results are
//! always collected in index order, so the output never depends on scheduling.

use std::cell::Cell;

thread_local! {
    static FORCE_SERIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with all nested [`map`] calls on this thread forced to serial mode.
pub fn serial<R>(f: impl FnOnce() -> R) -> R {
    let previous = FORCE_SERIAL.with(|flag| flag.replace(true));
    let out = f();
    FORCE_SERIAL.with(|flag| flag.set(previous));
    out
}

/// True when calls on this thread would fan out to worker threads.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SERIAL.with(Cell::get)
}

pub fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

pub fn try_map<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Caps the global worker pool. Only the first call in a process takes effect.
pub fn init_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}
