//! Sequential vs. parallel execution mode.
//!
//! The mode is thread-local. Parallel kernels split work over output rows only,
//! so each output element is still summed in the same order as in sequential
//! mode.

use std::cell::Cell;

thread_local! {
    static PARALLEL: Cell<bool> = const { Cell::new(false) };
}

pub fn parallel_enabled() -> bool {
    PARALLEL.with(|p| p.get())
}

/// Run `f` with parallel kernels enabled on this thread.
pub fn with_parallel<R>(enabled: bool, f: impl FnOnce() -> R) -> R {
    let prev = PARALLEL.with(|p| p.replace(enabled));
    let out = f();
    PARALLEL.with(|p| p.set(prev));
    out
}

/// Run `f` inside a rayon pool of `threads` workers with parallel kernels on.
/// `threads <= 1` runs sequentially on the caller's thread.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    if threads <= 1 {
        return with_parallel(false, f);
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
    pool.install(|| with_parallel(true, f))
}
