//! The divergence (Skorohod integral) on the discretized Wiener space.
//!
//! For an integrand `u` that is constant on each cell,
//!
//! ```text
//! delta(u) = sum_{k,j} u[k][j] dW[k][j] - dt * sum_{k,j} d u[k][j] / d dW[k][j]
//! ```
//!
//! which is the exact adjoint of the gradient for the Gaussian measure of the
//! increments: `E[<DF, u>_H] = E[F delta(u)]`.

use crate::error::{Error, Result};
use crate::wiener::functional::{Functional, Shape};
use crate::wiener::grid::{IncrementMatrix, TimeGrid};

fn check_integrand(u: &[Functional], dw: &IncrementMatrix, grid: &TimeGrid) -> Result<Shape> {
    let shape = Shape::new(grid.steps(), dw.noise_dim());
    if dw.steps() != grid.steps() {
        return Err(Error::ShapeMismatch(format!(
            "increments have {} cells, grid has {}",
            dw.steps(),
            grid.steps()
        )));
    }
    if u.len() != shape.dim() {
        return Err(Error::ShapeMismatch(format!(
            "integrand has {} cells, expected {}",
            u.len(),
            shape.dim()
        )));
    }
    if let Some(bad) = u.iter().find(|x| x.shape() != shape) {
        return Err(Error::ShapeMismatch(format!(
            "integrand lives on {:?}, increments on {:?}",
            bad.shape(),
            shape
        )));
    }
    Ok(shape)
}

/// Wiener integral of a deterministic piecewise-constant integrand.
pub fn wiener_integral(u: &[f64], dw: &IncrementMatrix) -> Result<f64> {
    if u.len() != dw.as_slice().len() {
        return Err(Error::ShapeMismatch(format!(
            "integrand has {} cells, increments {}",
            u.len(),
            dw.as_slice().len()
        )));
    }
    Ok(u.iter().zip(dw.as_slice()).map(|(a, b)| a * b).sum())
}

/// `delta(u)` for an integrand given cell by cell (flattened `k * m + j`),
/// each entry carrying at least its gradient.
pub fn skorohod(u: &[Functional], dw: &IncrementMatrix, grid: &TimeGrid) -> Result<f64> {
    check_integrand(u, dw, grid)?;
    let mut ito = 0.0;
    let mut trace = 0.0;
    for (a, (ua, x)) in u.iter().zip(dw.as_slice()).enumerate() {
        let g = ua.grad_slice().ok_or_else(|| {
            Error::MissingDerivative(format!("integrand cell {a} carries no gradient"))
        })?;
        ito += ua.value() * x;
        trace += g[a];
    }
    Ok(ito - grid.dt() * trace)
}

/// `delta(u)` as a functional one order below the integrand, so that the
/// divergence itself can be differentiated again.
pub fn skorohod_functional(
    u: &[Functional],
    dw: &IncrementMatrix,
    grid: &TimeGrid,
) -> Result<Functional> {
    let shape = check_integrand(u, dw, grid)?;
    let order = u.iter().map(Functional::order).min().unwrap_or(0);
    if order == 0 {
        return Err(Error::MissingDerivative(
            "integrand carries no gradient".into(),
        ));
    }
    let out_order = order - 1;
    let mut acc = Functional::constant(shape, 0.0, out_order);
    for (a, ua) in u.iter().enumerate() {
        let (k, j) = (a / shape.noise_dim, a % shape.noise_dim);
        let x = Functional::increment(shape, k, j, dw.get(k, j), out_order);
        acc = acc
            .add(&ua.truncated(out_order).mul(&x))
            .add_scaled(&ua.partial(a).truncated(out_order), -grid.dt());
    }
    Ok(acc)
}
