//! Data-parallel helpers with a sequential fallback.
//!
//! Work is always split into the same fixed-size chunks and results are
//! returned in chunk order, so both modes produce bitwise-identical output.
//! Without the `parallel` feature, [`Execution::Parallel`] runs sequentially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Applies `f(chunk_index, chunk)` to consecutive chunks of `items`.
pub fn map_chunks<T, R, F>(mode: Execution, items: &[T], chunk_size: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &[T]) -> R + Sync + Send,
{
    let chunk_size = chunk_size.max(1);
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return items
            .par_chunks(chunk_size)
            .enumerate()
            .map(|(i, c)| f(i, c))
            .collect();
    }
    let _ = mode;
    items
        .chunks(chunk_size)
        .enumerate()
        .map(|(i, c)| f(i, c))
        .collect()
}

/// Applies `f` to every index in `0..n`, returning results in index order.
pub fn map_range<R, F>(mode: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Splits `0..n` into chunk ranges of `chunk_size`.
pub fn chunk_ranges(n: usize, chunk_size: usize) -> Vec<std::ops::Range<usize>> {
    let chunk_size = chunk_size.max(1);
    (0..n)
        .step_by(chunk_size)
        .map(|s| s..(s + chunk_size).min(n))
        .collect()
}
