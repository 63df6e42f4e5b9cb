//! Tensor-product Gauss–Hermite quadrature over the increment matrix.
//!
//! This is the brute-force expectation oracle used to check identities that
//! hold exactly on the discretized Wiener space. Its cost is exponential in
//! `n * m`, hence the hard cap.

use crate::error::{invalid, Error, Result};
use crate::wiener::grid::{IncrementMatrix, TimeGrid};

/// Largest `n * m` the oracle accepts.
pub const MAX_QUADRATURE_DIMS: usize = 4;
/// Smallest node count per dimension the oracle accepts.
pub const MIN_NODES_PER_DIM: usize = 10;
/// Default node count per dimension.
pub const DEFAULT_NODES_PER_DIM: usize = 20;

/// Nodes and weights for `E[f(Z)]`, `Z ~ N(0, 1)`; exact for polynomials of
/// degree below `2 * count`.
pub fn standard_normal_rule(count: usize) -> (Vec<f64>, Vec<f64>) {
    // Newton iteration on the orthonormal Hermite recurrence, then rescaled
    // from the weight exp(-x^2) to the standard normal density.
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let n = count;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let half = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..half {
        z = match i {
            0 => {
                let s = (2 * n + 1) as f64;
                s.sqrt() - 1.85575 * s.powf(-0.16667)
            }
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let norm = std::f64::consts::PI.sqrt();
    let nodes = x.iter().map(|v| v * std::f64::consts::SQRT_2).collect();
    let weights = w.iter().map(|v| v / norm).collect();
    (nodes, weights)
}

/// `E[functional(dW)]` with every increment `dW[k][j] = sqrt(dt) Z`,
/// integrated by a tensor-product rule with `nodes_per_dim` points.
pub fn gh_expectation<F>(
    functional: F,
    grid: &TimeGrid,
    noise_dim: usize,
    nodes_per_dim: usize,
) -> Result<f64>
where
    F: Fn(&IncrementMatrix) -> f64,
{
    let dims = grid.steps() * noise_dim;
    if noise_dim == 0 {
        return Err(invalid("m", "noise dimension must be at least 1"));
    }
    if dims > MAX_QUADRATURE_DIMS {
        return Err(Error::DimensionCap {
            dims,
            cap: MAX_QUADRATURE_DIMS,
        });
    }
    if nodes_per_dim < MIN_NODES_PER_DIM {
        return Err(invalid(
            "nodes_per_dim",
            format!("need at least {MIN_NODES_PER_DIM} nodes, got {nodes_per_dim}"),
        ));
    }
    let (z, w) = standard_normal_rule(nodes_per_dim);
    let scale = grid.dt().sqrt();
    let mut idx = vec![0usize; dims];
    let mut total = 0.0;
    let mut dw = IncrementMatrix::zeros(*grid, noise_dim);
    loop {
        let mut weight = 1.0;
        for (a, &i) in idx.iter().enumerate() {
            dw.set(a / noise_dim, a % noise_dim, scale * z[i]);
            weight *= w[i];
        }
        total += weight * functional(&dw);
        // odometer over the tensor grid
        let mut a = 0;
        loop {
            if a == dims {
                return Ok(total);
            }
            idx[a] += 1;
            if idx[a] < nodes_per_dim {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_normal_moments() {
        for count in [10, 20, 30] {
            let (z, w) = standard_normal_rule(count);
            let moment = |p: i32| z.iter().zip(&w).map(|(x, wi)| wi * x.powi(p)).sum::<f64>();
            assert!((moment(0) - 1.0).abs() < 1e-13);
            assert!(moment(1).abs() < 1e-13);
            assert!((moment(2) - 1.0).abs() < 1e-12);
            assert!((moment(4) - 3.0).abs() < 1e-11);
            assert!((moment(6) - 15.0).abs() < 1e-10);
            assert!((moment(8) - 105.0).abs() < 1e-9);
            assert!(z.windows(2).all(|p| p[0] > p[1]));
        }
    }

    #[test]
    fn expectation_examples() {
        let g1 = TimeGrid::new(1.0, 1).unwrap();
        let e = gh_expectation(|dw| dw.get(0, 0).powi(2), &g1, 1, 20).unwrap();
        assert!((e - 1.0).abs() < 1e-12);

        let g2 = TimeGrid::new(1.0, 2).unwrap();
        let e = gh_expectation(|dw| (dw.get(0, 0) + dw.get(1, 0)).exp(), &g2, 1, 20).unwrap();
        assert!((e - 0.5f64.exp()).abs() < 1e-12, "{e}");

        let gh = TimeGrid::new(0.5, 1).unwrap();
        let e = gh_expectation(|dw| dw.get(0, 0).powi(4), &gh, 1, 20).unwrap();
        assert!((e - 0.75).abs() < 1e-12);
    }

    #[test]
    fn oracle_limits_are_enforced() {
        let g = TimeGrid::new(1.0, 5).unwrap();
        assert!(matches!(
            gh_expectation(|_| 0.0, &g, 1, 20),
            Err(Error::DimensionCap { dims: 5, .. })
        ));
        let g = TimeGrid::new(1.0, 2).unwrap();
        assert!(gh_expectation(|_| 0.0, &g, 3, 20).is_err());
        assert!(gh_expectation(|_| 0.0, &g, 1, 5).is_err());
    }

    #[test]
    fn two_noise_dimensions() {
        let g = TimeGrid::new(2.0, 2).unwrap();
        // E[(W^0(T) W^1(T))^2] = T^2
        let e = gh_expectation(|dw| (dw.terminal(0) * dw.terminal(1)).powi(2), &g, 2, 12).unwrap();
        assert!((e - 4.0).abs() < 1e-11);
    }
}
