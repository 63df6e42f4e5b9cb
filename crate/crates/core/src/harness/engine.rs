//! Deterministic parallel Monte Carlo.
//!
//! Paths are evaluated in parallel in fixed-size blocks; each block is
//! collected in index order and folded sequentially before the next block
//! starts. Results therefore do not depend on the worker count.

use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

/// Paths evaluated between two sequential reductions.
const BLOCK: u64 = 1024;

/// Running mean and unbiased variance (Welford).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanVar {
    count: u64,
    mean: f64,
    m2: f64,
}

impl MeanVar {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for MeanVar {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::new();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

/// A fixed-size worker pool.
pub struct Engine {
    workers: usize,
    pool: rayon::ThreadPool,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("workers", &self.workers).finish()
    }
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".into()
    }
}

impl Engine {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(invalid("workers", "need at least one worker"));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Ok(Self { workers, pool })
    }

    /// Single worker.
    pub fn serial() -> Self {
        Self::new(1).expect("a one-thread pool always builds")
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Evaluates `f` on every index and folds the results in ascending
    /// index order. A panic in `f` is reported with its path index.
    pub fn map_reduce<T, A, F, R>(&self, num_paths: u64, f: F, init: A, mut reduce: R) -> Result<A>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync,
        R: FnMut(A, T) -> A,
    {
        let mut acc = init;
        let mut start = 0;
        while start < num_paths {
            let end = (start + BLOCK).min(num_paths);
            let block: Vec<Result<T>> = self.pool.install(|| {
                (start..end)
                    .into_par_iter()
                    .map(|i| match catch_unwind(AssertUnwindSafe(|| f(i))) {
                        Ok(r) => r,
                        Err(p) => Err(Error::WorkerPanic {
                            index: i,
                            message: panic_message(p),
                        }),
                    })
                    .collect()
            });
            for r in block {
                acc = reduce(acc, r?);
            }
            start = end;
        }
        Ok(acc)
    }

    /// All per-path results, in index order.
    pub fn map<T, F>(&self, num_paths: u64, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync,
    {
        let cap = usize::try_from(num_paths).unwrap_or(0);
        self.map_reduce(num_paths, f, Vec::with_capacity(cap), |mut v, x| {
            v.push(x);
            v
        })
    }

    /// Mean and variance of a scalar per-path statistic.
    pub fn mean_var<F>(&self, num_paths: u64, f: F) -> Result<MeanVar>
    where
        F: Fn(u64) -> Result<f64> + Sync,
    {
        self.map_reduce(num_paths, f, MeanVar::new(), |mut acc, x| {
            acc.push(x);
            acc
        })
    }
}

/// Evaluates `per_path` on `0..num_paths` and folds in index order,
/// returning the aggregate together with mean and variance of the
/// per-path scalar chosen by `stat`.
pub fn mc_map_reduce<T, A, F, R, S>(
    engine: &Engine,
    num_paths: u64,
    per_path: F,
    init: A,
    mut reduce: R,
    stat: S,
) -> Result<(A, MeanVar)>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
    R: FnMut(A, &T) -> A,
    S: Fn(&T) -> f64,
{
    engine.map_reduce(num_paths, per_path, (init, MeanVar::new()), |(a, mut mv), x| {
        mv.push(stat(&x));
        (reduce(a, &x), mv)
    })
}
