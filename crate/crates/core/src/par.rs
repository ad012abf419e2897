//! Data-parallel helpers. With the `parallel` feature the work is spread over
//! the rayon pool; without it the same closures run in a plain loop. Results
//! are collected in index order either way, so outputs do not depend on the
//! thread count.

/// Block size shared by sample generation and ECF accumulation.
pub const CHUNK: usize = 4096;

/// Maps `f` over `0..count` on the calling thread.
pub fn map_indices_seq<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(f).collect()
}

/// Maps `f` over `0..count`, in parallel when the feature is enabled.
#[cfg(feature = "parallel")]
pub fn map_indices<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indices<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_indices_seq(count, f)
}

/// Number of `CHUNK`-sized blocks covering `n` items.
pub const fn chunk_count(n: usize) -> usize {
    n.div_ceil(CHUNK)
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Configures the global pool. `0` keeps rayon's default (one thread per
/// core). A no-op without the `parallel` feature.
pub fn init_threads(threads: usize) -> Result<(), String> {
    #[cfg(feature = "parallel")]
    {
        if threads > 0 {
            return rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .map_err(|e| e.to_string());
        }
    }
    let _ = threads;
    Ok(())
}
