use crate::error::{Error, Result};
use crate::wiener::TimeGrid;

/// Grid values `X(t_k)`, `k = 0..=n`, of a `d`-dimensional trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

/// Grid indices and weights of the piecewise-linear read at time `s`.
/// Times before 0 read the initial value; times past `T` read the last node.
pub fn interpolation_stencil(grid: &TimeGrid, s: f64) -> Vec<(usize, f64)> {
    if s <= 0.0 {
        return vec![(0, 1.0)];
    }
    let pos = grid.fractional_index(s);
    let n = grid.steps();
    if pos >= n as f64 {
        return vec![(n, 1.0)];
    }
    let k = pos.floor() as usize;
    let frac = pos - k as f64;
    if frac == 0.0 {
        vec![(k, 1.0)]
    } else {
        vec![(k, 1.0 - frac), (k + 1, frac)]
    }
}

impl DiscretePath {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() != (grid.steps() + 1) * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} nodes of dimension {dim}",
                values.len(),
                grid.steps() + 1
            )));
        }
        Ok(Self { grid, dim, values })
    }

    /// The path that stays at `x0` forever.
    pub fn constant(grid: TimeGrid, x0: &[f64]) -> Self {
        let values = x0.iter().copied().cycle().take(x0.len() * (grid.steps() + 1)).collect();
        Self {
            grid,
            dim: x0.len(),
            values,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.node(self.grid.steps())
    }

    /// Component `c` at every node.
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values.iter().skip(c).step_by(self.dim).copied().collect()
    }

    /// Piecewise-linear value at time `s`.
    pub fn at(&self, s: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (k, w) in interpolation_stencil(&self.grid, s) {
            for (o, v) in out.iter_mut().zip(self.node(k)) {
                *o += w * v;
            }
        }
        out
    }

    /// The path frozen at its value at `t_index` from then on.
    pub fn stopped(&self, t_index: usize) -> Self {
        let mut values = self.values.clone();
        let d = self.dim;
        let last = self.node(t_index).to_vec();
        for chunk in values[(t_index + 1) * d..].chunks_mut(d) {
            chunk.copy_from_slice(&last);
        }
        Self {
            grid: self.grid,
            dim: d,
            values,
        }
    }

    /// `max_k |X(t_k)|` in the Euclidean norm.
    pub fn sup_norm(&self) -> f64 {
        self.values
            .chunks(self.dim)
            .map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_reads_and_prehistory() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let p = DiscretePath::new(g, 1, vec![1.0, 2.0, 4.0, 8.0, 16.0]).unwrap();
        assert_eq!(p.at(-0.3), vec![1.0]);
        assert_eq!(p.at(0.5), vec![4.0]);
        assert!((p.at(0.375)[0] - 3.0).abs() < 1e-14);
        assert_eq!(p.at(1.0), vec![16.0]);
        assert_eq!(interpolation_stencil(&g, 0.75), vec![(3, 1.0)]);
    }

    #[test]
    fn stopping_freezes_the_tail() {
        let g = TimeGrid::new(1.0, 3).unwrap();
        let p = DiscretePath::new(g, 2, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]).unwrap();
        let s = p.stopped(1);
        assert_eq!(s.values(), &[0.0, 1.0, 2.0, 3.0, 2.0, 3.0, 2.0, 3.0]);
        assert_eq!(p.component(1), vec![1.0, 3.0, 5.0, 7.0]);
    }
}
