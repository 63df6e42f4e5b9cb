//! Malliavin covariance, integration-by-parts weights, the
//! Ornstein-Uhlenbeck generator and localization.
//!
//! Weights are assembled on Taylor jets: the integrand `gamma^{ij} G DF_j`
//! is built cell by cell as a functional of the increments, so its own
//! derivative (needed by the divergence) comes out of the product rule with
//! `D gamma = -gamma (D Sigma) gamma` handled implicitly by the jet inverse.

mod localization;

pub use localization::{cutoff, cutoff_derivs, localization_r, localization_r_functional, Cutoff, CutoffSpec};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::wiener::{inner_functional, malliavin_inner, skorohod_functional, Functional, FunctionalState, IncrementMatrix, TimeGrid};

/// Largest state dimension for which weights are assembled.
pub const MAX_WEIGHT_DIM: usize = 2;
/// Largest multi-index length of iterated weights.
pub const MAX_WEIGHT_ORDER: usize = 2;
/// Relative determinant floor below which a covariance counts as degenerate.
pub const DEGENERACY_FLOOR: f64 = 1e-12;

/// `Sigma^{ij} = <DF^i, DF^j>_H` with its determinant and inverse.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceMatrix {
    pub dim: usize,
    /// Row-major `d x d`.
    pub sigma: Vec<f64>,
    pub det: f64,
    /// Inverse, absent for degenerate samples.
    pub gamma: Option<Vec<f64>>,
    pub degenerate: bool,
}

impl CovarianceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.sigma[i * self.dim + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Squared Frobenius norm.
    pub fn frobenius_sq(&self) -> f64 {
        self.sigma.iter().map(|v| v * v).sum()
    }
}

/// True when `det < floor * (trace / d)^d`, or the matrix is not positive.
fn is_degenerate(det: f64, trace: f64, d: usize) -> bool {
    let scale = (trace / d as f64).powi(d as i32);
    !(det > 0.0) || !(trace > 0.0) || det < DEGENERACY_FLOOR * scale
}

/// Malliavin covariance of `f` with a singularity guard.
pub fn covariance(f: &FunctionalState, grid: &TimeGrid) -> Result<CovarianceMatrix> {
    let d = f.dim();
    let grads = f
        .components()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            c.grad()
                .ok_or_else(|| Error::MissingDerivative(format!("component {i} carries no gradient")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sigma = vec![0.0; d * d];
    for i in 0..d {
        for j in i..d {
            let v = malliavin_inner(&grads[i], &grads[j], grid)?;
            sigma[i * d + j] = v;
            sigma[j * d + i] = v;
        }
    }
    let mat = DMatrix::from_row_slice(d, d, &sigma);
    let det = mat.determinant();
    let trace = mat.trace();
    let degenerate = is_degenerate(det, trace, d);
    let gamma = if degenerate {
        None
    } else {
        mat.try_inverse().map(|g| {
            // nalgebra stores column-major; the matrix is symmetric
            g.as_slice().to_vec()
        })
    };
    let degenerate = degenerate || gamma.is_none();
    Ok(CovarianceMatrix {
        dim: d,
        sigma,
        det,
        gamma,
        degenerate,
    })
}

/// One evaluation of a weight on one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightSample {
    pub h: f64,
    pub alpha: Vec<usize>,
    /// Value of the localizing factor carried by `G`.
    pub localization: f64,
}

/// `Sigma` and its inverse as functionals one order below `f`.
fn gamma_functionals(f: &FunctionalState, dt: f64) -> Result<Vec<Functional>> {
    let d = f.dim();
    let c = f.components();
    let s = |i: usize, j: usize| inner_functional(&c[i], &c[j], dt);
    match d {
        1 => Ok(vec![s(0, 0).recip()]),
        2 => {
            let (a, b, dd) = (s(0, 0), s(0, 1), s(1, 1));
            let inv_det = a.mul(&dd).sub(&b.mul(&b)).recip();
            Ok(vec![
                dd.mul(&inv_det),
                b.mul(&inv_det).scale(-1.0),
                b.mul(&inv_det).scale(-1.0),
                a.mul(&inv_det),
            ])
        }
        _ => Err(Error::Unsupported(format!(
            "weights are assembled for d <= {MAX_WEIGHT_DIM}, got d = {d}"
        ))),
    }
}

/// `H_i(F, G) = delta(sum_j gamma^{ij} G DF^j)` as a functional one order
/// below `min(order F - 1, order G)`.
fn weight_functional(
    f: &FunctionalState,
    g: &Functional,
    i: usize,
    dw: &IncrementMatrix,
    grid: &TimeGrid,
    cov: &CovarianceMatrix,
) -> Result<Functional> {
    let d = f.dim();
    if i >= d {
        return Err(crate::error::invalid("i", format!("component {i} of a {d}-dimensional F")));
    }
    if f.order() < 2 {
        return Err(Error::MissingDerivative(
            "the weight needs the second Malliavin derivative of F".into(),
        ));
    }
    if g.order() < 1 {
        return Err(Error::MissingDerivative("the weight needs the derivative of G".into()));
    }
    let order = (f.order() - 1).min(g.order());
    if cov.degenerate {
        if g.is_identically_zero() {
            return Ok(Functional::constant(g.shape(), 0.0, order - 1));
        }
        return Err(Error::Degenerate { det: cov.det });
    }
    let gamma = gamma_functionals(f, grid.dt())?;
    let g = g.truncated(order);
    let cells = f.shape().dim();
    let mut u = Vec::with_capacity(cells);
    for a in 0..cells {
        let mut acc = Functional::constant(g.shape(), 0.0, order);
        for j in 0..d {
            let dfj = f.component(j).partial(a).truncated(order);
            acc = acc.add(&gamma[i * d + j].truncated(order).mul(&dfj));
        }
        u.push(acc.mul(&g));
    }
    skorohod_functional(&u, dw, grid)
}

/// `H_i(F, G)` on one sample. `F` needs its Hessian and `G` its gradient.
pub fn ibp_weight_first(
    f: &FunctionalState,
    g: &Functional,
    i: usize,
    dw: &IncrementMatrix,
    grid: &TimeGrid,
) -> Result<WeightSample> {
    let cov = covariance(f, grid)?;
    let h = weight_functional(f, g, i, dw, grid, &cov)?;
    Ok(WeightSample {
        h: h.value(),
        alpha: vec![i],
        localization: g.value(),
    })
}

/// `H_alpha(F, G) = H_{i_k}(F, H_{(i_1, ..., i_{k-1})}(F, G))`, `|alpha| <= 2`.
/// A multi-index of length two needs third derivatives of `F` and second
/// derivatives of `G`.
pub fn ibp_weight_iterated(
    f: &FunctionalState,
    g: &Functional,
    alpha: &[usize],
    dw: &IncrementMatrix,
    grid: &TimeGrid,
) -> Result<WeightSample> {
    if alpha.len() > MAX_WEIGHT_ORDER {
        return Err(Error::Unsupported(format!(
            "multi-indices longer than {MAX_WEIGHT_ORDER} are not supported"
        )));
    }
    let need_f = alpha.len() + 1;
    if !alpha.is_empty() && (f.order() < need_f || g.order() < alpha.len()) {
        return Err(Error::Unsupported(format!(
            "a weight of order {} needs derivatives of F up to order {need_f} and of G up to \
             order {}; got {} and {}. Third-order sensitivities are only propagated for scalar \
             Markovian models",
            alpha.len(),
            alpha.len(),
            f.order(),
            g.order()
        )));
    }
    let cov = if alpha.is_empty() {
        None
    } else {
        Some(covariance(f, grid)?)
    };
    let mut h = g.clone();
    for &i in alpha {
        h = weight_functional(f, &h, i, dw, grid, cov.as_ref().expect("set when alpha is nonempty"))?;
    }
    Ok(WeightSample {
        h: h.value(),
        alpha: alpha.to_vec(),
        localization: g.value(),
    })
}

/// `L F = -delta(D F)`.
pub fn ou_apply(f: &Functional, dw: &IncrementMatrix, grid: &TimeGrid) -> Result<f64> {
    if f.order() < 2 {
        return Err(Error::MissingDerivative(
            "the Ornstein-Uhlenbeck operator needs the second derivative".into(),
        ));
    }
    let u: Vec<Functional> = (0..f.shape().dim()).map(|a| f.partial(a)).collect();
    Ok(-skorohod_functional(&u, dw, grid)?.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wiener::{gh_expectation, Shape};

    fn brownian(dw: &IncrementMatrix, order: usize) -> Functional {
        let s = Shape::new(dw.steps(), 1);
        (0..dw.steps()).fold(Functional::constant(s, 0.0, order), |acc, k| {
            acc.add(&Functional::increment(s, k, 0, dw.get(k, 0), order))
        })
    }

    #[test]
    fn brownian_covariance() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let dw = IncrementMatrix::from_rows(g, 1, vec![0.1, 0.2, -0.3, 0.4]).unwrap();
        let w = brownian(&dw, 1);
        let c = covariance(&FunctionalState::scalar(w.clone()), &g).unwrap();
        assert!((c.sigma[0] - 1.0).abs() < 1e-15);
        assert!((c.gamma.unwrap()[0] - 1.0).abs() < 1e-15);
        let dup = FunctionalState::new(vec![w.clone(), w]).unwrap();
        let c = covariance(&dup, &g).unwrap();
        assert!(c.degenerate);
        assert!(c.gamma.is_none());
    }

    #[test]
    fn first_weight_of_brownian_motion() {
        let g = TimeGrid::new(1.0, 3).unwrap();
        let dw = IncrementMatrix::from_rows(g, 1, vec![0.4, -0.1, 0.9]).unwrap();
        let f = FunctionalState::scalar(brownian(&dw, 2));
        let one = Functional::constant(Shape::new(3, 1), 1.0, 1);
        let h = ibp_weight_first(&f, &one, 0, &dw, &g).unwrap();
        assert!((h.h - 1.2).abs() < 1e-14);
        let f3 = FunctionalState::scalar(brownian(&dw, 3));
        let one2 = Functional::constant(Shape::new(3, 1), 1.0, 2);
        let h2 = ibp_weight_iterated(&f3, &one2, &[0, 0], &dw, &g).unwrap();
        assert!((h2.h - (1.2f64.powi(2) - 1.0)).abs() < 1e-13);
        let h0 = ibp_weight_iterated(&f3, &one2, &[], &dw, &g).unwrap();
        assert_eq!(h0.h, 1.0);
    }

    #[test]
    fn cubic_functional_duality() {
        // F = x + x^3 on one cell, g(x) = x^2, G = 1
        let g = TimeGrid::new(1.0, 1).unwrap();
        let s = Shape::new(1, 1);
        let lhs = gh_expectation(
            |dw| {
                let x = Functional::increment(s, 0, 0, dw.get(0, 0), 2);
                2.0 * x.add(&x.powi(3)).value()
            },
            &g,
            1,
            40,
        )
        .unwrap();
        let rhs = gh_expectation(
            |dw| {
                let x = Functional::increment(s, 0, 0, dw.get(0, 0), 2);
                let f = x.add(&x.powi(3));
                let one = Functional::constant(s, 1.0, 1);
                let h = ibp_weight_first(&FunctionalState::scalar(f.clone()), &one, 0, dw, &g).unwrap();
                f.value().powi(2) * h.h
            },
            &g,
            1,
            40,
        )
        .unwrap();
        assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
    }

    #[test]
    fn degenerate_samples() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        let dw = IncrementMatrix::from_rows(g, 1, vec![0.4, -0.1]).unwrap();
        let s = Shape::new(2, 1);
        let f = FunctionalState::scalar(Functional::constant(s, 3.0, 2));
        let zero = Functional::constant(s, 0.0, 1);
        assert_eq!(ibp_weight_first(&f, &zero, 0, &dw, &g).unwrap().h, 0.0);
        let one = Functional::constant(s, 1.0, 1);
        assert!(matches!(
            ibp_weight_first(&f, &one, 0, &dw, &g),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn iterated_needs_third_order() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        let dw = IncrementMatrix::from_rows(g, 1, vec![0.4, -0.1]).unwrap();
        let f = FunctionalState::scalar(brownian(&dw, 2));
        let one = Functional::constant(Shape::new(2, 1), 1.0, 2);
        assert!(matches!(
            ibp_weight_iterated(&f, &one, &[0, 0], &dw, &g),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn ou_on_low_chaos() {
        let g = TimeGrid::new(2.0, 3).unwrap();
        let dw = IncrementMatrix::from_rows(g, 1, vec![0.5, -0.2, 0.6]).unwrap();
        let w = brownian(&dw, 2);
        assert!((ou_apply(&w, &dw, &g).unwrap() + 0.9).abs() < 1e-14);
        let w2 = w.mul(&w);
        assert!((ou_apply(&w2, &dw, &g).unwrap() - (-2.0 * 0.81 + 4.0)).abs() < 1e-13);
    }
}
