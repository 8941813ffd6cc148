use crate::error::{Error, Result};

/// Runs `f` on a dedicated rayon pool with `threads` workers (0 = rayon's
/// default sizing).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::param("with_threads", e.to_string()))?;
    Ok(pool.install(f))
}

/// Thread cap from the `PASM_THREADS` environment variable; unset means 0.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var("PASM_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::param("PASM_THREADS", format!("expected a non-negative integer, got `{v}`"))),
        Err(_) => Ok(0),
    }
}
