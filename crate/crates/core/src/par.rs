//! Execution policy for the data-parallel kernels.
//!
//! With the `parallel` feature (default) large kernels are split across the
//! rayon pool. Without it, or for inputs below [`PAR_THRESHOLD`], everything
//! runs on the calling thread. All kernels are exact integer arithmetic, so
//! both paths produce bit-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Element count below which the parallel path is not worth the dispatch.
pub const PAR_THRESHOLD: usize = 1 << 14;

/// Chunk length used when splitting flat buffers.
const CHUNK: usize = 1 << 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Exec {
    /// Picks the parallel path for large inputs when it is compiled in.
    pub fn auto(work: usize) -> Exec {
        if cfg!(feature = "parallel") && work >= PAR_THRESHOLD {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }

    pub fn is_parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// `out[i] = f(a[i], b[i])`.
pub fn zip_map<F>(exec: Exec, a: &[u64], b: &[u64], f: F) -> Vec<u64>
where
    F: Fn(u64, u64) -> u64 + Sync + Send,
{
    debug_assert_eq!(a.len(), b.len());
    let mut out = vec![0u64; a.len()];
    for_each_chunk(exec, &mut out, CHUNK, |ci, chunk| {
        let base = ci * CHUNK;
        for (k, o) in chunk.iter_mut().enumerate() {
            *o = f(a[base + k], b[base + k]);
        }
    });
    out
}

/// `out[i] = f(a[i])`.
pub fn map<F>(exec: Exec, a: &[u64], f: F) -> Vec<u64>
where
    F: Fn(u64) -> u64 + Sync + Send,
{
    let mut out = vec![0u64; a.len()];
    for_each_chunk(exec, &mut out, CHUNK, |ci, chunk| {
        let base = ci * CHUNK;
        for (k, o) in chunk.iter_mut().enumerate() {
            *o = f(a[base + k]);
        }
    });
    out
}

/// Runs `f(chunk_index, chunk)` over consecutive `chunk_len` pieces of `out`.
pub fn for_each_chunk<F>(exec: Exec, out: &mut [u64], chunk_len: usize, f: F)
where
    F: Fn(usize, &mut [u64]) + Sync + Send,
{
    let chunk_len = chunk_len.max(1);
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => out
            .par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c)),
        _ => out
            .chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c)),
    }
}

/// Maps `f` over `items`, in parallel when requested and available.
pub fn map_items<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => items.par_iter().map(f).collect(),
        _ => items.iter().map(f).collect(),
    }
}
