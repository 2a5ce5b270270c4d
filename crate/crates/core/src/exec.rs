//! Work scheduling for the data-parallel inner loops.
//!
//! Every parallel loop in the crate goes through these helpers. They map an
//! index range (or row blocks) to an order-preserving `Vec`, and callers do any
//! floating-point reduction sequentially over that `Vec`. Combined with
//! per-index RNG streams this makes every stage bit-identical for any rayon
//! thread count, for the runtime sequential mode, and for builds without the
//! `parallel` feature.

use std::ops::Range;
use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Force all helpers onto the plain sequential path even when the `parallel`
/// feature is compiled in. Useful for benchmarking and determinism checks.
pub fn set_sequential(sequential: bool) {
    FORCE_SEQUENTIAL.store(sequential, Ordering::Relaxed);
}

/// True when work is scheduled on the current thread only.
pub fn is_sequential() -> bool {
    if cfg!(not(feature = "parallel")) {
        return true;
    }
    FORCE_SEQUENTIAL.load(Ordering::Relaxed)
}

/// Apply `f` to every index in `0..n`, collecting results in index order.
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if !is_sequential() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Split `0..n` into blocks of `block` indices and map each block with `f`,
/// collecting per-block results in block order. Block boundaries are fixed by
/// `block`, not by the thread count, so any reduction the caller performs over
/// the returned `Vec` is scheduling-independent.
pub fn map_blocks<U, F>(n: usize, block: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(Range<usize>) -> U + Sync + Send,
{
    assert!(block > 0);
    let nblocks = n.div_ceil(block);
    map_range(nblocks, |b| {
        let lo = b * block;
        f(lo..(lo + block).min(n))
    })
}

/// Apply `f(chunk_index, chunk_slice)` to consecutive `chunk_len`-sized
/// pieces of `data`; the final chunk may be shorter. Chunk boundaries depend
/// only on `chunk_len`, so per-chunk work is scheduling-independent.
pub fn for_each_chunk<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk_len > 0);
    #[cfg(feature = "parallel")]
    if !is_sequential() {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(r, chunk)| f(r, chunk));
        return;
    }
    for (r, chunk) in data.chunks_mut(chunk_len).enumerate() {
        f(r, chunk);
    }
}

/// Apply `f(row_index, row_slice)` to each `row_len`-sized row of `data`.
pub fn for_each_row<T, F>(data: &mut [T], row_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(row_len > 0 && data.len() % row_len == 0);
    #[cfg(feature = "parallel")]
    if !is_sequential() {
        use rayon::prelude::*;
        data.par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(r, row)| f(r, row));
        return;
    }
    for (r, row) in data.chunks_mut(row_len).enumerate() {
        f(r, row);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_range_preserves_order() {
        let v = map_range(100, |i| i * i);
        assert_eq!(v[7], 49);
        assert_eq!(v.len(), 100);
    }

    #[test]
    fn map_blocks_covers_all_indices() {
        let blocks = map_blocks(10, 3, |r| r.collect::<Vec<_>>());
        let flat: Vec<usize> = blocks.into_iter().flatten().collect();
        assert_eq!(flat, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn chunks_cover_ragged_tails() {
        let mut data = vec![0usize; 10];
        for_each_chunk(&mut data, 4, |c, chunk| {
            for (k, v) in chunk.iter_mut().enumerate() {
                *v = c * 4 + k;
            }
        });
        assert_eq!(data, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn sequential_mode_matches_parallel() {
        let par = map_range(1000, |i| (i as f64).sin());
        set_sequential(true);
        let seq = map_range(1000, |i| (i as f64).sin());
        set_sequential(false);
        assert_eq!(par, seq);
    }
}
