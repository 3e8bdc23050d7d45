//! Execution mode and deterministic reductions.
//!
//! Cell loops run over contiguous x-rows. With the `parallel` feature the rows
//! are distributed over the rayon pool; without it (or when the mode is set to
//! [`Execution::Sequential`]) the same closures run in a plain loop. Reductions
//! always partition the input into fixed-size blocks, sum each block with
//! Neumaier compensation in canonical order, and combine the block sums with a
//! pairwise tree. The partition does not depend on the worker count, so
//! results are bit-identical across thread counts and modes.

use std::sync::atomic::{AtomicU8, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of cells per reduction block.
pub const REDUCTION_BLOCK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

const SEQ: u8 = 0;
const PAR: u8 = 1;

static MODE: AtomicU8 = AtomicU8::new(PAR);

/// Select how cell loops are executed for the whole process.
///
/// `Parallel` silently degrades to sequential when the crate is built
/// without the `parallel` feature.
pub fn set_execution(mode: Execution) {
    let v = match mode {
        Execution::Sequential => SEQ,
        Execution::Parallel => PAR,
    };
    MODE.store(v, Ordering::Relaxed);
}

pub fn execution() -> Execution {
    if cfg!(feature = "parallel") && MODE.load(Ordering::Relaxed) == PAR {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

/// Run `f(row_index, row)` over consecutive `row_len` chunks of `out` and
/// collect the per-row results in row order.
pub fn map_rows<R, F>(out: &mut [f64], row_len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize, &mut [f64]) -> R + Sync + Send,
{
    debug_assert_eq!(out.len() % row_len, 0);
    match execution() {
        #[cfg(feature = "parallel")]
        Execution::Parallel => out
            .par_chunks_mut(row_len)
            .enumerate()
            .map(|(r, row)| f(r, row))
            .collect(),
        _ => out
            .chunks_mut(row_len)
            .enumerate()
            .map(|(r, row)| f(r, row))
            .collect(),
    }
}

/// Two-output variant of [`map_rows`]; both buffers share the row layout.
pub fn map_rows2<R, F>(a: &mut [f64], b: &mut [f64], row_len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize, &mut [f64], &mut [f64]) -> R + Sync + Send,
{
    debug_assert_eq!(a.len(), b.len());
    match execution() {
        #[cfg(feature = "parallel")]
        Execution::Parallel => a
            .par_chunks_mut(row_len)
            .zip(b.par_chunks_mut(row_len))
            .enumerate()
            .map(|(r, (ra, rb))| f(r, ra, rb))
            .collect(),
        _ => a
            .chunks_mut(row_len)
            .zip(b.chunks_mut(row_len))
            .enumerate()
            .map(|(r, (ra, rb))| f(r, ra, rb))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.comp
    }
}

fn pairwise(parts: &[f64]) -> f64 {
    match parts.len() {
        0 => 0.0,
        1 => parts[0],
        n => {
            let mid = n / 2;
            pairwise(&parts[..mid]) + pairwise(&parts[mid..])
        }
    }
}

/// Deterministic sum of `f(i)` for `i in 0..n`.
pub fn sum_by_index<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let blocks = n.div_ceil(REDUCTION_BLOCK);
    let block_sum = |b: usize| {
        let lo = b * REDUCTION_BLOCK;
        let hi = (lo + REDUCTION_BLOCK).min(n);
        let mut acc = Neumaier::default();
        for i in lo..hi {
            acc.add(f(i));
        }
        acc.value()
    };
    let parts: Vec<f64> = match execution() {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..blocks).into_par_iter().map(block_sum).collect(),
        _ => (0..blocks).map(block_sum).collect(),
    };
    pairwise(&parts)
}

pub fn sum(values: &[f64]) -> f64 {
    sum_by_index(values.len(), |i| values[i])
}

/// Deterministic dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sum_by_index(a.len(), |i| a[i] * b[i])
}
