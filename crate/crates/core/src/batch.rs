//! Row-parallel execution helper.
//!
//! Scoring is embarrassingly parallel over samples: each row's score is a
//! pure function of that row, so the parallel path produces bit-identical
//! output to the sequential one (there is no cross-row reduction). The
//! `parallel` feature selects the rayon path; [`map_rows_seq`] is always
//! available as the sequential reference.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting results in index order. Runs on the rayon
/// pool when the `parallel` feature is enabled, sequentially otherwise.
pub fn map_rows<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential reference path; the parallel dispatch must match it bit for bit.
pub fn map_rows_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
