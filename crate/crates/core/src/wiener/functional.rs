//! Smooth Wiener functionals on the discretized space.
//!
//! A functional of the increment matrix is carried as a truncated Taylor jet
//! in the `N = n * m` increments: value, gradient, and optionally the second
//! and third derivative tensors. Since `D_r F` is constant on each cell, the
//! gradient with respect to `dW[k][j]` *is* the Malliavin derivative on cell
//! `k`, and higher derivatives are the iterated Malliavin derivatives.
//!
//! Arithmetic on jets follows the Leibniz and Faà di Bruno rules, so any
//! expression built from increments stays exact to the carried order.

use crate::error::{Error, Result};
use crate::wiener::grid::TimeGrid;

/// Number of cells and noise dimensions of the underlying increment matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub steps: usize,
    pub noise_dim: usize,
}

impl Shape {
    pub fn new(steps: usize, noise_dim: usize) -> Self {
        Self { steps, noise_dim }
    }

    /// Flattened coordinate count `n * m`.
    pub fn dim(&self) -> usize {
        self.steps * self.noise_dim
    }

    pub fn flat(&self, k: usize, j: usize) -> usize {
        k * self.noise_dim + j
    }
}

/// Piecewise-constant field `g[k][j]`, the value of `D^j_r F` on cell `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    shape: Shape,
    data: Vec<f64>,
}

impl GradientField {
    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.dim()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.dim() {
            return Err(Error::ShapeMismatch(format!(
                "gradient needs {} entries, got {}",
                shape.dim(),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn constant(shape: Shape, value: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.dim()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.data[self.shape.flat(k, j)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Re-expresses the field on a grid `factor` times finer by repeating
    /// each cell value.
    pub fn refine(&self, factor: usize) -> GradientField {
        let m = self.shape.noise_dim;
        let shape = Shape::new(self.shape.steps * factor, m);
        let mut data = Vec::with_capacity(shape.dim());
        for k in 0..self.shape.steps {
            for _ in 0..factor {
                data.extend_from_slice(&self.data[k * m..(k + 1) * m]);
            }
        }
        GradientField { shape, data }
    }

    /// Averages runs of `factor` fine cells onto one coarse cell.
    pub fn average_onto(&self, factor: usize) -> Result<GradientField> {
        if factor == 0 || self.shape.steps % factor != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} cells cannot be averaged in blocks of {factor}",
                self.shape.steps
            )));
        }
        let m = self.shape.noise_dim;
        let shape = Shape::new(self.shape.steps / factor, m);
        let mut data = vec![0.0; shape.dim()];
        for k in 0..shape.steps {
            for j in 0..m {
                let mut acc = 0.0;
                for r in 0..factor {
                    acc += self.data[(k * factor + r) * m + j];
                }
                data[k * m + j] = acc / factor as f64;
            }
        }
        Ok(GradientField { shape, data })
    }
}

/// Second derivative `D^2 F` as a dense symmetric `N x N` matrix over
/// flattened cell coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianField {
    dim: usize,
    data: Vec<f64>,
}

impl HessianField {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn from_vec(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::ShapeMismatch(format!(
                "hessian needs {} entries, got {}",
                dim * dim,
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.dim + b]
    }

    pub fn row(&self, a: usize) -> &[f64] {
        &self.data[a * self.dim..(a + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Largest `|h[a][b] - h[b][a]|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let mut worst = 0.0f64;
        for a in 0..self.dim {
            for b in a + 1..self.dim {
                worst = worst.max((self.get(a, b) - self.get(b, a)).abs());
            }
        }
        worst / scale
    }

    /// Block-repeats a coarse-grid Hessian onto a grid `factor` times finer.
    pub fn refine(&self, shape: Shape, factor: usize) -> HessianField {
        let m = shape.noise_dim;
        let fine_dim = self.dim * factor;
        let mut data = vec![0.0; fine_dim * fine_dim];
        let coarse_of = |a: usize| (a / m / factor) * m + a % m;
        for a in 0..fine_dim {
            let ca = coarse_of(a);
            for b in 0..fine_dim {
                data[a * fine_dim + b] = self.data[ca * self.dim + coarse_of(b)];
            }
        }
        HessianField {
            dim: fine_dim,
            data,
        }
    }
}

/// Third derivative tensor, dense `N x N x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThirdField {
    dim: usize,
    data: Vec<f64>,
}

impl ThirdField {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn from_vec(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim * dim {
            return Err(Error::ShapeMismatch(format!(
                "third derivative needs {} entries, got {}",
                dim * dim * dim,
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.dim + b) * self.dim + c]
    }
}

/// A scalar Wiener functional with derivatives up to `order()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Functional {
    shape: Shape,
    value: f64,
    grad: Option<Vec<f64>>,
    hess: Option<Vec<f64>>,
    third: Option<Vec<f64>>,
}

impl Functional {
    /// Deterministic constant carrying zero derivatives up to `order`.
    pub fn constant(shape: Shape, value: f64, order: usize) -> Self {
        let n = shape.dim();
        Self {
            shape,
            value,
            grad: (order >= 1).then(|| vec![0.0; n]),
            hess: (order >= 2).then(|| vec![0.0; n * n]),
            third: (order >= 3).then(|| vec![0.0; n * n * n]),
        }
    }

    /// The coordinate functional `dW[k][j]` evaluated at `value`.
    pub fn increment(shape: Shape, k: usize, j: usize, value: f64, order: usize) -> Self {
        let mut f = Self::constant(shape, value, order);
        if let Some(g) = f.grad.as_mut() {
            g[shape.flat(k, j)] = 1.0;
        }
        f
    }

    /// Assembles a functional from explicit derivative data. Higher orders
    /// are only accepted when every lower order is present.
    pub fn from_parts(
        shape: Shape,
        value: f64,
        grad: Option<GradientField>,
        hess: Option<HessianField>,
        third: Option<ThirdField>,
    ) -> Result<Self> {
        match &grad {
            Some(g) if g.shape() != shape => {
                return Err(Error::ShapeMismatch(format!(
                    "gradient shape {:?} does not match {:?}",
                    g.shape(),
                    shape
                )));
            }
            None if hess.is_some() || third.is_some() => {
                return Err(Error::MissingDerivative(
                    "higher derivatives supplied without a gradient".into(),
                ));
            }
            _ => {}
        }
        let n = shape.dim();
        if let Some(h) = &hess {
            if h.dim() != n {
                return Err(Error::ShapeMismatch(format!(
                    "hessian dimension {} does not match gradient dimension {n}",
                    h.dim()
                )));
            }
        }
        if let Some(t) = &third {
            if hess.is_none() {
                return Err(Error::MissingDerivative(
                    "third derivative supplied without a hessian".into(),
                ));
            }
            if t.dim != n {
                return Err(Error::ShapeMismatch("third derivative dimension".into()));
            }
        }
        Ok(Self {
            shape,
            value,
            grad: grad.map(|g| g.data),
            hess: hess.map(|h| h.data),
            third: third.map(|t| t.data),
        })
    }

    /// Value-only functional; carries no derivative information.
    pub fn value_only(shape: Shape, value: f64) -> Self {
        Self::constant(shape, value, 0)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn order(&self) -> usize {
        match (&self.grad, &self.hess, &self.third) {
            (None, _, _) => 0,
            (Some(_), None, _) => 1,
            (Some(_), Some(_), None) => 2,
            _ => 3,
        }
    }

    pub fn grad(&self) -> Option<GradientField> {
        self.grad.as_ref().map(|g| GradientField {
            shape: self.shape,
            data: g.clone(),
        })
    }

    pub fn grad_slice(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn hess(&self) -> Option<HessianField> {
        self.hess.as_ref().map(|h| HessianField {
            dim: self.shape.dim(),
            data: h.clone(),
        })
    }

    pub fn hess_slice(&self) -> Option<&[f64]> {
        self.hess.as_deref()
    }

    /// Drops derivative data above `order`.
    pub fn truncated(&self, order: usize) -> Self {
        let mut out = self.clone();
        out.truncate(order);
        out
    }

    pub fn truncate(&mut self, order: usize) {
        if order < 3 {
            self.third = None;
        }
        if order < 2 {
            self.hess = None;
        }
        if order < 1 {
            self.grad = None;
        }
    }

    /// Whether value and all carried derivatives are exactly zero.
    pub fn is_identically_zero(&self) -> bool {
        let zero = |v: &Option<Vec<f64>>| v.as_ref().is_none_or(|x| x.iter().all(|&e| e == 0.0));
        self.value == 0.0 && zero(&self.grad) && zero(&self.hess) && zero(&self.third)
    }

    fn check_shape(&self, other: &Functional) {
        assert_eq!(
            self.shape, other.shape,
            "functionals live on different increment spaces"
        );
    }

    /// The same functional viewed on a grid `factor` times finer, where each
    /// coarse increment is the sum of `factor` fine ones. Orders above 2 are
    /// dropped.
    pub fn refined(&self, factor: usize) -> Functional {
        let fine = Shape::new(self.shape.steps * factor, self.shape.noise_dim);
        let grad = self.grad().map(|g| g.refine(factor));
        let hess = self.hess().map(|h| h.refine(self.shape, factor));
        Functional {
            shape: fine,
            value: self.value,
            grad: grad.map(|g| g.data),
            hess: hess.map(|h| h.data),
            third: None,
        }
    }

    /// `D_a F` as a functional one order lower.
    pub fn partial(&self, a: usize) -> Functional {
        let n = self.shape.dim();
        let value = self.grad.as_ref().map(|g| g[a]).unwrap_or(0.0);
        Functional {
            shape: self.shape,
            value,
            grad: self.hess.as_ref().map(|h| h[a * n..(a + 1) * n].to_vec()),
            hess: self
                .third
                .as_ref()
                .map(|t| t[a * n * n..(a + 1) * n * n].to_vec()),
            third: None,
        }
    }

    pub fn scale(&self, c: f64) -> Functional {
        let s = |v: &Option<Vec<f64>>| v.as_ref().map(|x| x.iter().map(|e| e * c).collect());
        Functional {
            shape: self.shape,
            value: self.value * c,
            grad: s(&self.grad),
            hess: s(&self.hess),
            third: s(&self.third),
        }
    }

    pub fn offset(&self, c: f64) -> Functional {
        let mut out = self.clone();
        out.value += c;
        out
    }

    fn combine(&self, other: &Functional, a: f64, b: f64) -> Functional {
        self.check_shape(other);
        let z = |x: &Option<Vec<f64>>, y: &Option<Vec<f64>>| match (x, y) {
            (Some(x), Some(y)) => Some(x.iter().zip(y).map(|(p, q)| a * p + b * q).collect()),
            _ => None,
        };
        let grad = z(&self.grad, &other.grad);
        let hess = grad.as_ref().and(z(&self.hess, &other.hess));
        let third = hess.as_ref().and(z(&self.third, &other.third));
        Functional {
            shape: self.shape,
            value: a * self.value + b * other.value,
            grad,
            hess,
            third,
        }
    }

    pub fn add(&self, other: &Functional) -> Functional {
        self.combine(other, 1.0, 1.0)
    }

    pub fn sub(&self, other: &Functional) -> Functional {
        self.combine(other, 1.0, -1.0)
    }

    /// `self + c * other`
    pub fn add_scaled(&self, other: &Functional, c: f64) -> Functional {
        self.combine(other, 1.0, c)
    }

    /// Product by the Leibniz rule, truncated to the lower of the two orders.
    pub fn mul(&self, other: &Functional) -> Functional {
        self.check_shape(other);
        let n = self.shape.dim();
        let order = self.order().min(other.order());
        let (f, g) = (self, other);
        let grad = (order >= 1).then(|| {
            let (fa, ga) = (f.grad.as_ref().unwrap(), g.grad.as_ref().unwrap());
            (0..n).map(|a| fa[a] * g.value + f.value * ga[a]).collect::<Vec<_>>()
        });
        let hess = (order >= 2).then(|| {
            let (fa, ga) = (f.grad.as_ref().unwrap(), g.grad.as_ref().unwrap());
            let (fab, gab) = (f.hess.as_ref().unwrap(), g.hess.as_ref().unwrap());
            let mut h = vec![0.0; n * n];
            for a in 0..n {
                for b in 0..n {
                    let i = a * n + b;
                    h[i] = fab[i] * g.value + fa[a] * ga[b] + fa[b] * ga[a] + f.value * gab[i];
                }
            }
            h
        });
        let third = (order >= 3).then(|| {
            let (fa, ga) = (f.grad.as_ref().unwrap(), g.grad.as_ref().unwrap());
            let (fab, gab) = (f.hess.as_ref().unwrap(), g.hess.as_ref().unwrap());
            let (fabc, gabc) = (f.third.as_ref().unwrap(), g.third.as_ref().unwrap());
            let mut t = vec![0.0; n * n * n];
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        let i = (a * n + b) * n + c;
                        t[i] = fabc[i] * g.value
                            + fab[a * n + b] * ga[c]
                            + fab[a * n + c] * ga[b]
                            + fab[b * n + c] * ga[a]
                            + fa[a] * gab[b * n + c]
                            + fa[b] * gab[a * n + c]
                            + fa[c] * gab[a * n + b]
                            + f.value * gabc[i];
                    }
                }
            }
            t
        });
        Functional {
            shape: self.shape,
            value: f.value * g.value,
            grad,
            hess,
            third,
        }
    }

    /// `phi(F)` given `phi` and its first three derivatives at `F`'s value.
    pub fn compose(&self, derivs: [f64; 4]) -> Functional {
        let n = self.shape.dim();
        let [p0, p1, p2, p3] = derivs;
        let grad = self
            .grad
            .as_ref()
            .map(|g| g.iter().map(|x| p1 * x).collect::<Vec<_>>());
        let hess = match (&self.grad, &self.hess) {
            (Some(g), Some(h)) => {
                let mut out = vec![0.0; n * n];
                for a in 0..n {
                    for b in 0..n {
                        out[a * n + b] = p2 * g[a] * g[b] + p1 * h[a * n + b];
                    }
                }
                Some(out)
            }
            _ => None,
        };
        let third = match (&self.grad, &self.hess, &self.third) {
            (Some(g), Some(h), Some(t)) => {
                let mut out = vec![0.0; n * n * n];
                for a in 0..n {
                    for b in 0..n {
                        for c in 0..n {
                            let i = (a * n + b) * n + c;
                            out[i] = p3 * g[a] * g[b] * g[c]
                                + p2 * (h[a * n + b] * g[c] + h[a * n + c] * g[b] + h[b * n + c] * g[a])
                                + p1 * t[i];
                        }
                    }
                }
                Some(out)
            }
            _ => None,
        };
        Functional {
            shape: self.shape,
            value: p0,
            grad,
            hess,
            third,
        }
    }

    /// `1 / F`; the caller guarantees a nonzero value.
    pub fn recip(&self) -> Functional {
        let x = self.value;
        self.compose([1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x), -6.0 / (x * x * x * x)])
    }

    pub fn exp(&self) -> Functional {
        let e = self.value.exp();
        self.compose([e; 4])
    }

    pub fn powi(&self, p: i32) -> Functional {
        let x = self.value;
        let pf = p as f64;
        let term = |k: i32, c: f64| if p - k < 0 && x == 0.0 { 0.0 } else { c * x.powi(p - k) };
        self.compose([
            x.powi(p),
            term(1, pf),
            term(2, pf * (pf - 1.0)),
            term(3, pf * (pf - 1.0) * (pf - 2.0)),
        ])
    }

    /// Evaluates the carried Taylor polynomial at displacement `h`
    /// (flattened increments); exact for polynomials of degree <= order.
    pub fn taylor(&self, h: &[f64]) -> f64 {
        let n = self.shape.dim();
        let mut v = self.value;
        if let Some(g) = &self.grad {
            v += g.iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
        }
        if let Some(hs) = &self.hess {
            let mut q = 0.0;
            for a in 0..n {
                for b in 0..n {
                    q += hs[a * n + b] * h[a] * h[b];
                }
            }
            v += 0.5 * q;
        }
        if let Some(t) = &self.third {
            let mut c3 = 0.0;
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        c3 += t[(a * n + b) * n + c] * h[a] * h[b] * h[c];
                    }
                }
            }
            v += c3 / 6.0;
        }
        v
    }
}

/// A `d`-component functional sharing one increment space.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalState {
    components: Vec<Functional>,
}

impl FunctionalState {
    pub fn new(components: Vec<Functional>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::ShapeMismatch("a functional needs at least one component".into()));
        }
        let shape = components[0].shape();
        let order = components[0].order();
        if components.iter().any(|c| c.shape() != shape || c.order() != order) {
            return Err(Error::ShapeMismatch(
                "components disagree in shape or derivative order".into(),
            ));
        }
        Ok(Self { components })
    }

    pub fn scalar(f: Functional) -> Self {
        Self { components: vec![f] }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn shape(&self) -> Shape {
        self.components[0].shape()
    }

    pub fn order(&self) -> usize {
        self.components[0].order()
    }

    pub fn component(&self, i: usize) -> &Functional {
        &self.components[i]
    }

    pub fn components(&self) -> &[Functional] {
        &self.components
    }

    pub fn values(&self) -> Vec<f64> {
        self.components.iter().map(Functional::value).collect()
    }

    pub fn map(&self, f: impl Fn(&Functional) -> Functional) -> Self {
        Self {
            components: self.components.iter().map(f).collect(),
        }
    }

    pub fn sub(&self, other: &FunctionalState) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::ShapeMismatch("component counts differ".into()));
        }
        Ok(Self {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.sub(b))
                .collect(),
        })
    }
}

/// `<a, b>_H = sum_{k,j} a[k][j] b[k][j] dt`.
pub fn malliavin_inner(a: &GradientField, b: &GradientField, grid: &TimeGrid) -> Result<f64> {
    if a.shape != b.shape || a.shape.steps != grid.steps() {
        return Err(Error::ShapeMismatch(format!(
            "inner product of {:?} and {:?} on a {}-step grid",
            a.shape,
            b.shape,
            grid.steps()
        )));
    }
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum::<f64>() * grid.dt())
}

/// `<DF, DG>_H` as a functional one order below the lower of the inputs.
pub fn inner_functional(f: &Functional, g: &Functional, dt: f64) -> Functional {
    let n = f.shape().dim();
    let order = f.order().min(g.order()).saturating_sub(1);
    let mut acc = Functional::constant(f.shape(), 0.0, order);
    for a in 0..n {
        acc = acc.add(&f.partial(a).mul(&g.partial(a)).truncated(order));
    }
    acc.scale(dt)
}
