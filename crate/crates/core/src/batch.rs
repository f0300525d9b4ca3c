//! Data-parallel batch evaluation with deterministic, thread-count
//! independent reductions.
//!
//! Work is partitioned into fixed chunks by path index, never by thread:
//! chunk boundaries depend only on the batch size, each chunk is evaluated
//! sequentially in index order, and chunk results are folded in chunk
//! order. Identical seeds therefore give identical results whether the
//! `parallel` feature is on or off and whatever the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of fixed chunks a batch is split into.
pub fn chunk_count(batch: u64) -> u64 {
    batch.clamp(1, 512)
}

fn chunk_bounds(batch: u64, chunks: u64, c: u64) -> (u64, u64) {
    let base = batch / chunks;
    let rem = batch % chunks;
    let lo = c * base + c.min(rem);
    let hi = lo + base + u64::from(c < rem);
    (lo, hi)
}

/// Map `f` over `0..batch` and collect per-index results in index order.
pub fn map_indexed<T, F>(batch: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    let chunks = chunk_count(batch);
    let per_chunk = run_chunks(batch, chunks, |lo, hi| (lo..hi).map(&f).collect::<Vec<T>>());
    per_chunk.into_iter().flatten().collect()
}

/// Fold `f(i)` over `0..batch` through a per-chunk sequential fold and an
/// ordered cross-chunk merge.
pub fn fold_indexed<A, F, G, M>(batch: u64, init: G, f: F, merge: M) -> A
where
    A: Send,
    F: Fn(A, u64) -> A + Sync,
    G: Fn() -> A + Sync,
    M: Fn(A, A) -> A,
{
    let chunks = chunk_count(batch);
    let per_chunk = run_chunks(batch, chunks, |lo, hi| (lo..hi).fold(init(), &f));
    let mut iter = per_chunk.into_iter();
    let first = iter.next().expect("at least one chunk");
    iter.fold(first, merge)
}

#[cfg(feature = "parallel")]
fn run_chunks<T, F>(batch: u64, chunks: u64, per_chunk: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, u64) -> T + Sync,
{
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let (lo, hi) = chunk_bounds(batch, chunks, c);
            per_chunk(lo, hi)
        })
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn run_chunks<T, F>(batch: u64, chunks: u64, per_chunk: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, u64) -> T + Sync,
{
    (0..chunks)
        .map(|c| {
            let (lo, hi) = chunk_bounds(batch, chunks, c);
            per_chunk(lo, hi)
        })
        .collect()
}

/// Always-sequential variant of [`map_indexed`]; the benchmark baseline.
pub fn map_indexed_seq<T, F>(batch: u64, f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    (0..batch).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_bounds_partition_the_range() {
        for batch in [1u64, 7, 512, 513, 10_000] {
            let chunks = chunk_count(batch);
            let mut expected = 0;
            for c in 0..chunks {
                let (lo, hi) = chunk_bounds(batch, chunks, c);
                assert_eq!(lo, expected);
                expected = hi;
            }
            assert_eq!(expected, batch);
        }
    }

    #[test]
    fn map_matches_sequential() {
        let f = |i: u64| (i as f64).sin();
        let a = map_indexed(1000, f);
        let b = map_indexed_seq(1000, f);
        assert_eq!(a, b);
    }

    #[test]
    fn fold_is_deterministic() {
        let f = |acc: f64, i: u64| acc + 1.0 / (1.0 + i as f64);
        let a = fold_indexed(10_000, || 0.0, f, |x, y| x + y);
        let b = fold_indexed(10_000, || 0.0, f, |x, y| x + y);
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
