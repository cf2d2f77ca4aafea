//! Tile partitioning and the parallel/sequential execution switch.
//!
//! Work is always split into the same fixed tiles and results are combined
//! in tile order, so the output does not depend on the thread count or on
//! whether the `parallel` feature is compiled in.

use std::ops::Range;

/// Upper bound on pixels per posterior tile.
pub const MAX_TILE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Uses rayon when the `parallel` feature is on, otherwise runs sequentially.
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

/// Contiguous ranges of at most `tile` items covering `0..len`.
pub fn tiles(len: usize, tile: usize) -> Vec<Range<usize>> {
    assert!(tile > 0, "tile size must be positive");
    (0..len)
        .step_by(tile)
        .map(|start| start..(start + tile).min(len))
        .collect()
}

impl Exec {
    /// Maps `f` over `items`, returning results in input order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }

    /// Maps `f` over `0..n`, returning results in index order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// Runs `f` on disjoint `chunk`-sized pieces of `out` with their offsets.
    pub fn for_each_chunk<T, F>(self, out: &mut [T], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                out.par_chunks_mut(chunk)
                    .enumerate()
                    .for_each(|(k, piece)| f(k * chunk, piece));
            }
            _ => out
                .chunks_mut(chunk)
                .enumerate()
                .for_each(|(k, piece)| f(k * chunk, piece)),
        }
    }
}
