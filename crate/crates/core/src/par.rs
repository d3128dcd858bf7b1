//! Worker-pool sizing from `MVSSEG_THREADS`.

use crate::error::{Error, Result};

pub const THREADS_ENV: &str = "MVSSEG_THREADS";

/// Thread count requested by the environment; 0 or unset means all cores.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV}={v} is not a count"))),
        _ => Ok(0),
    }
}

/// Configure the global rayon pool once. Later calls are no-ops.
pub fn init_threads(threads: usize) {
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
}

/// Run `f` inside a dedicated pool of `threads` workers (0 = all cores).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
