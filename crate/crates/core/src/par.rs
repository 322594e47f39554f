//! Chunked parallel reductions with a fixed merge order.
//!
//! Rows are split into chunks of `ROW_CHUNK` regardless of the worker count,
//! each chunk is reduced independently and the partial results are folded
//! left to right, so results are bitwise identical for any thread pool size.

use rayon::prelude::*;

pub(crate) const ROW_CHUNK: usize = 1024;

/// Reduce `count` rows chunk by chunk, then fold the partials in chunk order.
pub(crate) fn chunked_reduce<T, M, F>(count: usize, map: M, mut fold: F) -> Option<T>
where
    T: Send,
    M: Fn(std::ops::Range<usize>) -> T + Sync,
    F: FnMut(T, T) -> T,
{
    let chunks = count.div_ceil(ROW_CHUNK);
    let partials: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| map(c * ROW_CHUNK..((c + 1) * ROW_CHUNK).min(count)))
        .collect();
    let mut iter = partials.into_iter();
    let first = iter.next()?;
    Some(iter.fold(first, &mut fold))
}

/// Apply `f` to every row index in parallel, preserving order.
pub(crate) fn map_rows<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..count)
        .into_par_iter()
        .with_min_len(256)
        .map(f)
        .collect()
}

/// Squared L2 distance with `f64` accumulation in four fixed lanes.
#[inline]
pub(crate) fn sq_dist(row: &[f32], center: &[f64]) -> f64 {
    debug_assert_eq!(row.len(), center.len());
    let mut acc = [0.0f64; 4];
    let mut rc = row.chunks_exact(4);
    let mut cc = center.chunks_exact(4);
    for (r, c) in (&mut rc).zip(&mut cc) {
        for l in 0..4 {
            let d = r[l] as f64 - c[l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0;
    for (r, c) in rc.remainder().iter().zip(cc.remainder()) {
        let d = *r as f64 - c;
        tail += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// L1 distance, same lane layout as [`sq_dist`].
#[inline]
pub(crate) fn l1_dist(row: &[f32], center: &[f64]) -> f64 {
    debug_assert_eq!(row.len(), center.len());
    let mut acc = [0.0f64; 4];
    let mut rc = row.chunks_exact(4);
    let mut cc = center.chunks_exact(4);
    for (r, c) in (&mut rc).zip(&mut cc) {
        for l in 0..4 {
            acc[l] += (r[l] as f64 - c[l]).abs();
        }
    }
    let mut tail = 0.0;
    for (r, c) in rc.remainder().iter().zip(cc.remainder()) {
        tail += (*r as f64 - c).abs();
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
