//! Uniform time grids and Brownian increment matrices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};

/// Uniform discretization of `[0, T]` into `n` cells.
///
/// Cell `k` is the right-closed interval `(t_k, t_{k+1}]`; the Euler scheme
/// freezes its coefficients at the left node `t_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid("T", format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(invalid("n", "step count must be at least 1"));
        }
        Ok(Self {
            horizon,
            steps,
            dt: horizon / steps as f64,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Grid node `t_k = kT/n`; the last node is exactly `T`.
    pub fn node(&self, k: usize) -> f64 {
        if k >= self.steps {
            self.horizon
        } else {
            k as f64 * self.horizon / self.steps as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.node(k)).collect()
    }

    /// Position of `t` in units of `dt`, snapped to the nearest integer when
    /// within rounding distance of it.
    pub(crate) fn fractional_index(&self, t: f64) -> f64 {
        let pos = t * self.steps as f64 / self.horizon;
        let rounded = pos.round();
        if (pos - rounded).abs() <= 1e-9 * rounded.abs().max(1.0) {
            rounded
        } else {
            pos
        }
    }

    /// Cell index `k_n(t) = floor(t n / T)`, clamped to `[0, n]`.
    pub fn cell_index(&self, t: f64) -> usize {
        let pos = self.fractional_index(t).floor();
        if pos <= 0.0 {
            0
        } else {
            (pos as usize).min(self.steps)
        }
    }

    /// `eta_n(t) = k_n(t) T / n`; `eta(T) = T`.
    pub fn eta(&self, t: f64) -> f64 {
        self.node(self.cell_index(t))
    }

    /// A grid over the same horizon with `steps / factor` cells.
    pub fn coarsened(&self, factor: usize) -> Result<TimeGrid> {
        if factor == 0 || self.steps % factor != 0 {
            return Err(invalid(
                "factor",
                format!("{} steps are not divisible by {factor}", self.steps),
            ));
        }
        TimeGrid::new(self.horizon, self.steps / factor)
    }
}

/// Brownian increments `dW[k][j] = W^j(t_{k+1}) - W^j(t_k)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementMatrix {
    grid: TimeGrid,
    noise_dim: usize,
    data: Vec<f64>,
}

impl IncrementMatrix {
    pub fn from_rows(grid: TimeGrid, noise_dim: usize, data: Vec<f64>) -> Result<Self> {
        if noise_dim == 0 {
            return Err(invalid("m", "noise dimension must be at least 1"));
        }
        if data.len() != grid.steps() * noise_dim {
            return Err(Error::ShapeMismatch(format!(
                "expected {}x{} increments, got {} values",
                grid.steps(),
                noise_dim,
                data.len()
            )));
        }
        Ok(Self {
            grid,
            noise_dim,
            data,
        })
    }

    pub fn zeros(grid: TimeGrid, noise_dim: usize) -> Self {
        Self {
            grid,
            noise_dim,
            data: vec![0.0; grid.steps() * noise_dim],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.data[k * self.noise_dim + j]
    }

    pub fn set(&mut self, k: usize, j: usize, value: f64) {
        self.data[k * self.noise_dim + j] = value;
    }

    /// Increments of cell `k`, one per noise dimension.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.noise_dim..(k + 1) * self.noise_dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `W^j(T)`, summed in cell order.
    pub fn terminal(&self, j: usize) -> f64 {
        (0..self.steps()).map(|k| self.get(k, j)).sum()
    }

    /// Copy with entry `(k, j)` shifted by `eps`.
    pub fn bumped(&self, k: usize, j: usize, eps: f64) -> Self {
        let mut out = self.clone();
        out.data[k * self.noise_dim + j] += eps;
        out
    }
}

/// Draws the increment matrix of trajectory `traj_index`.
///
/// Each trajectory owns the ChaCha stream `traj_index` of the generator seeded
/// with `seed`, so the result does not depend on which thread produced it or
/// on how many trajectories were drawn before it.
pub fn sample_increments(
    seed: u64,
    traj_index: u64,
    grid: &TimeGrid,
    noise_dim: usize,
) -> Result<IncrementMatrix> {
    if noise_dim == 0 {
        return Err(invalid("m", "noise dimension must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(traj_index);
    let scale = grid.dt().sqrt();
    let data = (0..grid.steps() * noise_dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
        .collect();
    Ok(IncrementMatrix {
        grid: *grid,
        noise_dim,
        data,
    })
}

/// Sums each run of `factor` consecutive fine increments into one coarse
/// increment over the same horizon.
pub fn coarsen(fine: &IncrementMatrix, factor: usize) -> Result<IncrementMatrix> {
    let grid = fine.grid.coarsened(factor)?;
    let m = fine.noise_dim;
    let mut data = vec![0.0; grid.steps() * m];
    for k in 0..grid.steps() {
        for j in 0..m {
            let mut acc = 0.0;
            for r in 0..factor {
                acc += fine.get(k * factor + r, j);
            }
            data[k * m + j] = acc;
        }
    }
    Ok(IncrementMatrix {
        grid,
        noise_dim: m,
        data,
    })
}
