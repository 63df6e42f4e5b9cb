//! Euler scheme for path-dependent SDEs and forward propagation of the
//! first and second Malliavin variations of its grid values.
//!
//! ```text
//! X(t_{l+1}) = X(t_l) + b(t_l, X stopped at t_l) dt + sigma(t_l, X stopped at t_l) dW_l
//! ```
//!
//! Differentiating this recursion with respect to an increment `dW_k^j`
//! gives the discrete derivative recursion; every coefficient reads the
//! path through the model's linear features, so `D Phi_a` is a weighted sum
//! of earlier rows of the variation.

mod study;

pub use study::{
    derivative_error_study, strong_error_study, DerivativeStudy, IncrementBound, StrongStudy,
    StudyParams,
};

use crate::error::{invalid, Error, Result};
use crate::models::{CoefficientModel, DiscretePath, Stencil};
use crate::wiener::{
    Functional, FunctionalState, GradientField, HessianField, IncrementMatrix, Shape, TimeGrid,
};

/// Default limit on `n * m` for the second variation.
pub const SECOND_VARIATION_CAP: usize = 64;
/// Limit on `n` for third-order jets of scalar Markovian models.
pub const THIRD_ORDER_CAP: usize = 16;

/// Grid values of a solution together with the frozen coefficients and
/// feature values used on each step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub path: DiscretePath,
    /// `n x d x m`.
    pub sigma: Vec<f64>,
    /// `n x d`.
    pub drift: Vec<f64>,
    features: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn sigma_at(&self, l: usize) -> &[f64] {
        let dm = self.sigma.len() / self.path.grid().steps();
        &self.sigma[l * dm..(l + 1) * dm]
    }

    pub fn drift_at(&self, l: usize) -> &[f64] {
        let d = self.path.dim();
        &self.drift[l * d..(l + 1) * d]
    }

    /// Feature values read on step `l`.
    pub fn features_at(&self, l: usize) -> &[f64] {
        &self.features[l]
    }
}

/// `D_k^j X^i(t_l)`, zero whenever `k >= l`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationTensor {
    steps: usize,
    noise_dim: usize,
    dim: usize,
    /// Row `l` holds `(k * m + j) * d + i`.
    data: Vec<f64>,
}

impl VariationTensor {
    fn row_len(&self) -> usize {
        self.steps * self.noise_dim * self.dim
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, k: usize, l: usize, j: usize, i: usize) -> f64 {
        self.data[l * self.row_len() + (k * self.noise_dim + j) * self.dim + i]
    }

    /// All of `D X(t_l)`, flattened as `(k * m + j) * d + i`.
    pub fn row(&self, l: usize) -> &[f64] {
        let r = self.row_len();
        &self.data[l * r..(l + 1) * r]
    }

    /// `D X^i(t_l)` as a field over cells.
    pub fn gradient(&self, l: usize, i: usize) -> GradientField {
        let data = self.row(l).iter().skip(i).step_by(self.dim).copied().collect();
        GradientField::from_vec(Shape::new(self.steps, self.noise_dim), data)
            .expect("row length matches the shape")
    }
}

/// `D^2_{(k,j),(k',j')} X^i(t_l)`, zero whenever `max(k, k') >= l`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondVariationTensor {
    steps: usize,
    noise_dim: usize,
    dim: usize,
    /// Row `l` holds `(a * P + b) * d + i` with `a = k * m + j`, `P = n * m`.
    data: Vec<f64>,
}

impl SecondVariationTensor {
    fn cells(&self) -> usize {
        self.steps * self.noise_dim
    }

    fn row_len(&self) -> usize {
        self.cells() * self.cells() * self.dim
    }

    pub fn get(&self, k: usize, kp: usize, l: usize, j: usize, jp: usize, i: usize) -> f64 {
        let p = self.cells();
        let a = k * self.noise_dim + j;
        let b = kp * self.noise_dim + jp;
        self.data[l * self.row_len() + (a * p + b) * self.dim + i]
    }

    /// `D^2 X^i(t_l)` over flattened cells.
    pub fn hessian(&self, l: usize, i: usize) -> HessianField {
        let r = self.row_len();
        let data = self.data[l * r..(l + 1) * r]
            .iter()
            .skip(i)
            .step_by(self.dim)
            .copied()
            .collect();
        HessianField::from_vec(self.cells(), data).expect("row length matches the shape")
    }

    /// Largest `|D^2_{ab} - D^2_{ba}|` over all rows and components.
    pub fn asymmetry(&self) -> f64 {
        (0..=self.steps)
            .flat_map(|l| (0..self.dim).map(move |i| (l, i)))
            .map(|(l, i)| self.hessian(l, i).asymmetry())
            .fold(0.0, f64::max)
    }
}

/// Euler solver for one model on one grid. Feature stencils are computed
/// once and reused for every path.
pub struct Solver<'a> {
    model: &'a dyn CoefficientModel,
    stencil: Stencil,
}

impl<'a> Solver<'a> {
    pub fn new(model: &'a dyn CoefficientModel, grid: &TimeGrid) -> Result<Self> {
        if model.state_dim() == 0 || model.noise_dim() == 0 {
            return Err(invalid("model", "dimensions must be positive"));
        }
        Ok(Self {
            model,
            stencil: Stencil::new(model, grid)?,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        self.stencil.grid()
    }

    pub fn model(&self) -> &dyn CoefficientModel {
        self.model
    }

    fn check(&self, dw: &IncrementMatrix, x0: &[f64]) -> Result<()> {
        let g = self.grid();
        if dw.steps() != g.steps() || dw.grid().horizon() != g.horizon() {
            return Err(Error::ShapeMismatch(format!(
                "increments on {} cells over T={}, grid has {} over T={}",
                dw.steps(),
                dw.grid().horizon(),
                g.steps(),
                g.horizon()
            )));
        }
        if dw.noise_dim() != self.model.noise_dim() {
            return Err(Error::ShapeMismatch(format!(
                "increments have {} noise dimensions, model {}",
                dw.noise_dim(),
                self.model.noise_dim()
            )));
        }
        if x0.len() != self.model.state_dim() {
            return Err(Error::ShapeMismatch(format!(
                "initial value has {} components, model {}",
                x0.len(),
                self.model.state_dim()
            )));
        }
        Ok(())
    }

    /// Runs the scheme and keeps the frozen coefficients of every step.
    pub fn trajectory(&self, dw: &IncrementMatrix, x0: &[f64]) -> Result<Trajectory> {
        self.check(dw, x0)?;
        let grid = *self.grid();
        let (n, d, m) = (grid.steps(), self.model.state_dim(), self.model.noise_dim());
        let dt = grid.dt();
        let mut values = vec![0.0; (n + 1) * d];
        values[..d].copy_from_slice(x0);
        let mut sigma = vec![0.0; n * d * m];
        let mut drift = vec![0.0; n * d];
        let mut features = Vec::with_capacity(n);
        let mut fv = Vec::new();
        for l in 0..n {
            self.stencil.eval(l, &values, d, &mut fv);
            let s = &mut sigma[l * d * m..(l + 1) * d * m];
            let b = &mut drift[l * d..(l + 1) * d];
            self.model.coefficients(l, &grid, &fv, s, b);
            let inc = dw.row(l);
            for i in 0..d {
                let noise: f64 = (0..m).map(|j| s[i * m + j] * inc[j]).sum();
                let next = values[l * d + i] + b[i] * dt + noise;
                if !next.is_finite() {
                    return Err(Error::NonFinite { step: l });
                }
                values[(l + 1) * d + i] = next;
            }
            features.push(fv.clone());
        }
        Ok(Trajectory {
            path: DiscretePath::new(grid, d, values)?,
            sigma,
            drift,
            features,
        })
    }

    pub fn solve(&self, dw: &IncrementMatrix, x0: &[f64]) -> Result<DiscretePath> {
        Ok(self.trajectory(dw, x0)?.path)
    }

    /// First variation along a trajectory computed by [`Solver::trajectory`].
    pub fn first_variation(&self, dw: &IncrementMatrix, traj: &Trajectory) -> Result<VariationTensor> {
        if self.model.smoothness() < 1 {
            return Err(Error::MissingDerivative(
                "model declares no first derivatives".into(),
            ));
        }
        let grid = *self.grid();
        let (n, d, m) = (grid.steps(), self.model.state_dim(), self.model.noise_dim());
        let dt = grid.dt();
        let r = n * m * d;
        let mut data = vec![0.0; (n + 1) * r];
        let mut dphi = vec![0.0; n * m];
        let mut coef = vec![0.0; d];
        for l in 0..n {
            let feats = self.stencil.at(l);
            let k_count = feats.len();
            let mut ds = vec![0.0; k_count * d * m];
            let mut db = vec![0.0; k_count * d];
            self.model
                .coefficient_gradients(l, &grid, traj.features_at(l), &mut ds, &mut db);
            let (head, tail) = data.split_at_mut((l + 1) * r);
            let next = &mut tail[..r];
            next.copy_from_slice(&head[l * r..]);
            // cells k < l are the only nonzero ones in rows s <= l
            let live = l * m;
            let inc = dw.row(l);
            for (a, f) in feats.iter().enumerate() {
                for i in 0..d {
                    coef[i] = db[a * d + i] * dt
                        + (0..m).map(|j| ds[(a * d + i) * m + j] * inc[j]).sum::<f64>();
                }
                if coef.iter().all(|&c| c == 0.0) {
                    continue;
                }
                dphi[..live].fill(0.0);
                for &(s, c, w) in &f.terms {
                    let row = &head[s * r..(s + 1) * r];
                    for (kj, v) in dphi[..live].iter_mut().enumerate() {
                        *v += w * row[kj * d + c];
                    }
                }
                for (kj, &g) in dphi[..live].iter().enumerate() {
                    for i in 0..d {
                        next[kj * d + i] += coef[i] * g;
                    }
                }
            }
            let s = traj.sigma_at(l);
            for j in 0..m {
                for i in 0..d {
                    next[(l * m + j) * d + i] += s[i * m + j];
                }
            }
        }
        Ok(VariationTensor {
            steps: n,
            noise_dim: m,
            dim: d,
            data,
        })
    }

    /// Second variation; refuses grids with `n * m` above `cap`.
    pub fn second_variation(
        &self,
        dw: &IncrementMatrix,
        traj: &Trajectory,
        first: &VariationTensor,
        cap: usize,
    ) -> Result<SecondVariationTensor> {
        let grid = *self.grid();
        let (n, d, m) = (grid.steps(), self.model.state_dim(), self.model.noise_dim());
        let p = n * m;
        if p > cap {
            return Err(Error::Infeasible(format!(
                "second variation on n*m = {p} cells exceeds the cap of {cap}; \
                 it would need about {:.1e} operations and {:.1} MB per path",
                (p as f64).powi(2) * n as f64 * d as f64,
                ((n + 1) * p * p * d * 8) as f64 / 1e6
            )));
        }
        if self.model.smoothness() < 2 {
            return Err(Error::MissingDerivative(
                "model declares no second derivatives".into(),
            ));
        }
        let dt = grid.dt();
        let r = p * p * d;
        let mut data = vec![0.0; (n + 1) * r];
        for l in 0..n {
            let feats = self.stencil.at(l);
            let kc = feats.len();
            let fv = traj.features_at(l);
            let mut ds = vec![0.0; kc * d * m];
            let mut db = vec![0.0; kc * d];
            self.model.coefficient_gradients(l, &grid, fv, &mut ds, &mut db);
            let mut ds2 = vec![0.0; kc * kc * d * m];
            let mut db2 = vec![0.0; kc * kc * d];
            self.model.coefficient_hessians(l, &grid, fv, &mut ds2, &mut db2);
            let inc = dw.row(l);
            let live = l * m;
            // D Phi_a over live cells, component-free: dphi[a][cell]
            let mut dphi = vec![0.0; kc * live];
            for (a, f) in feats.iter().enumerate() {
                for &(s, c, w) in &f.terms {
                    let row = first.row(s);
                    for kj in 0..live {
                        dphi[a * live + kj] += w * row[kj * d + c];
                    }
                }
            }
            let (head, tail) = data.split_at_mut((l + 1) * r);
            let next = &mut tail[..r];
            next.copy_from_slice(&head[l * r..]);
            // first-order coefficient on D^2 Phi_a
            for (a, f) in feats.iter().enumerate() {
                let coef: Vec<f64> = (0..d)
                    .map(|i| {
                        db[a * d + i] * dt
                            + (0..m).map(|j| ds[(a * d + i) * m + j] * inc[j]).sum::<f64>()
                    })
                    .collect();
                if coef.iter().all(|&c| c == 0.0) {
                    continue;
                }
                for &(s, c, w) in &f.terms {
                    let row = &head[s * r..(s + 1) * r];
                    for x in 0..live {
                        for y in 0..live {
                            let v = w * row[(x * p + y) * d + c];
                            if v != 0.0 {
                                for i in 0..d {
                                    next[(x * p + y) * d + i] += coef[i] * v;
                                }
                            }
                        }
                    }
                }
            }
            // second partials of the coefficients against D Phi_a D Phi_b
            for a in 0..kc {
                for b in 0..kc {
                    let blk = a * kc + b;
                    let coef: Vec<f64> = (0..d)
                        .map(|i| {
                            db2[blk * d + i] * dt
                                + (0..m)
                                    .map(|j| ds2[(blk * d + i) * m + j] * inc[j])
                                    .sum::<f64>()
                        })
                        .collect();
                    if coef.iter().all(|&c| c == 0.0) {
                        continue;
                    }
                    for x in 0..live {
                        let gx = dphi[a * live + x];
                        if gx == 0.0 {
                            continue;
                        }
                        for y in 0..live {
                            let g = gx * dphi[b * live + y];
                            for i in 0..d {
                                next[(x * p + y) * d + i] += coef[i] * g;
                            }
                        }
                    }
                }
            }
            // cross terms from the source sigma(t_l) 1{k = l}
            for jn in 0..m {
                let cell = l * m + jn;
                for a in 0..kc {
                    for y in 0..live {
                        let g = dphi[a * live + y];
                        if g == 0.0 {
                            continue;
                        }
                        for i in 0..d {
                            let v = ds[(a * d + i) * m + jn] * g;
                            next[(cell * p + y) * d + i] += v;
                            next[(y * p + cell) * d + i] += v;
                        }
                    }
                }
            }
        }
        Ok(SecondVariationTensor {
            steps: n,
            noise_dim: m,
            dim: d,
            data,
        })
    }

    /// `X(T)` as a functional of the increments carrying derivatives up to
    /// `order`. Order 3 is available for scalar Markovian models only.
    pub fn terminal_state(
        &self,
        dw: &IncrementMatrix,
        x0: &[f64],
        order: usize,
        cap: usize,
    ) -> Result<FunctionalState> {
        self.check(dw, x0)?;
        if order >= 3 {
            return self.markovian_jet(dw, x0, order).map(FunctionalState::scalar);
        }
        let traj = self.trajectory(dw, x0)?;
        let n = self.grid().steps();
        let shape = Shape::new(n, self.model.noise_dim());
        let terminal = traj.path.terminal().to_vec();
        if order == 0 {
            let comps = terminal
                .iter()
                .map(|&v| Functional::value_only(shape, v))
                .collect();
            return FunctionalState::new(comps);
        }
        let first = self.first_variation(dw, &traj)?;
        let second = if order >= 2 {
            Some(self.second_variation(dw, &traj, &first, cap)?)
        } else {
            None
        };
        let comps = terminal
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                Functional::from_parts(
                    shape,
                    v,
                    Some(first.gradient(n, i)),
                    second.as_ref().map(|s| s.hessian(n, i)),
                    None,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        FunctionalState::new(comps)
    }

    /// Propagates a full Taylor jet through the scheme for a scalar
    /// Markovian model.
    fn markovian_jet(&self, dw: &IncrementMatrix, x0: &[f64], order: usize) -> Result<Functional> {
        let n = self.grid().steps();
        if order > 3 {
            return Err(Error::Unsupported(format!(
                "derivatives of order {order}; at most 3 are propagated"
            )));
        }
        if self.model.state_dim() != 1 || self.model.noise_dim() != 1 {
            return Err(Error::Unsupported(
                "third-order sensitivities need a scalar model driven by one noise".into(),
            ));
        }
        if self.model.markovian_scalar(0, x0[0]).is_none() {
            return Err(Error::Unsupported(
                "third-order sensitivities are only propagated for Markovian models".into(),
            ));
        }
        if n > THIRD_ORDER_CAP {
            return Err(Error::Infeasible(format!(
                "third-order sensitivities on {n} steps exceed the cap of {THIRD_ORDER_CAP}"
            )));
        }
        let shape = Shape::new(n, 1);
        let dt = self.grid().dt();
        let mut x = Functional::constant(shape, x0[0], order);
        for l in 0..n {
            let [s, b] = self
                .model
                .markovian_scalar(l, x.value())
                .ok_or_else(|| Error::Unsupported("model stopped being Markovian".into()))?;
            let inc = Functional::increment(shape, l, 0, dw.get(l, 0), order);
            x = x.add(&x.compose(b).scale(dt)).add(&x.compose(s).mul(&inc));
            if !x.value().is_finite() {
                return Err(Error::NonFinite { step: l });
            }
        }
        Ok(x)
    }
}

/// Euler path driven by `dw` from `x0`.
pub fn solve(
    model: &dyn CoefficientModel,
    grid: &TimeGrid,
    dw: &IncrementMatrix,
    x0: &[f64],
) -> Result<DiscretePath> {
    Solver::new(model, grid)?.solve(dw, x0)
}

pub fn first_variation(
    model: &dyn CoefficientModel,
    grid: &TimeGrid,
    dw: &IncrementMatrix,
    x0: &[f64],
) -> Result<VariationTensor> {
    let solver = Solver::new(model, grid)?;
    let traj = solver.trajectory(dw, x0)?;
    solver.first_variation(dw, &traj)
}

/// Second variation with the default cap of [`SECOND_VARIATION_CAP`] cells.
pub fn second_variation(
    model: &dyn CoefficientModel,
    grid: &TimeGrid,
    dw: &IncrementMatrix,
    x0: &[f64],
) -> Result<SecondVariationTensor> {
    second_variation_with_cap(model, grid, dw, x0, SECOND_VARIATION_CAP)
}

pub fn second_variation_with_cap(
    model: &dyn CoefficientModel,
    grid: &TimeGrid,
    dw: &IncrementMatrix,
    x0: &[f64],
    cap: usize,
) -> Result<SecondVariationTensor> {
    let solver = Solver::new(model, grid)?;
    let traj = solver.trajectory(dw, x0)?;
    let first = solver.first_variation(dw, &traj)?;
    solver.second_variation(dw, &traj, &first, cap)
}
