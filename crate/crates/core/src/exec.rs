//! Chunked map/reduce over sample indices.
//!
//! Samples are split into fixed-size chunks. Each chunk is reduced
//! sequentially and the chunk results are merged in index order, so the
//! floating-point summation order (and therefore every output bit) is the same
//! for any worker count.

use std::ops::Range;

use nalgebra::DMatrix;

/// How Monte Carlo loops are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon work stealing. Falls back to sequential without the `parallel` feature.
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

/// Splits `0..n` into chunks of `chunk` indices and maps each one, returning
/// the per-chunk results in index order.
pub fn map_chunks<T, F>(exec: Execution, n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = n.div_ceil(chunk);
    let range = move |c: usize| (c * chunk)..((c + 1) * chunk).min(n);
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n_chunks).into_par_iter().map(|c| f(range(c))).collect()
        }
        _ => (0..n_chunks).map(|c| f(range(c))).collect(),
    }
}

/// Running mean of a stream of matrices (Welford update, no variance).
#[derive(Debug, Clone)]
pub struct MatrixMean {
    pub count: usize,
    pub mean: DMatrix<f64>,
}

impl MatrixMean {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            count: 0,
            mean: DMatrix::zeros(rows, cols),
        }
    }

    pub fn push(&mut self, x: &DMatrix<f64>) {
        self.count += 1;
        let w = 1.0 / self.count as f64;
        self.mean.zip_apply(x, |m, v| *m += (v - *m) * w);
    }

    pub fn merge(&mut self, other: &MatrixMean) {
        if other.count == 0 {
            return;
        }
        let total = self.count + other.count;
        let w = other.count as f64 / total as f64;
        self.mean.zip_apply(&other.mean, |m, v| *m += (v - *m) * w);
        self.count = total;
    }
}

/// Running mean and sum of squared deviations of a scalar stream.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScalarStats {
    pub count: usize,
    pub mean: f64,
    m2: f64,
}

impl ScalarStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &ScalarStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}
