//! Path-dependent coefficient functionals.
//!
//! A model evaluates `sigma(t, X)` and `b(t, X)` on the path stopped at a grid
//! time. Every model here reads the path through a handful of *linear path
//! features* (a grid value, an interpolated delayed value, a trapezoidal
//! integral) and applies a smooth function to them. Partials with respect to
//! individual grid values then follow from the chain rule, and the variation
//! recursions can work on the few features instead of the whole history.

mod builtin;
mod path;
pub mod trig;

use std::collections::BTreeMap;

use nalgebra::DMatrix;

pub use builtin::{BuiltinModel, ModelBounds, ModelSpec, ScalarKind, TermSpec};
pub use path::{interpolation_stencil, DiscretePath};

use crate::error::{invalid, Error, Result};
use crate::wiener::TimeGrid;

/// `sum_{(s, c, w)} w * x_s^c` over grid values of the stopped path.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PathFeature {
    pub terms: Vec<(usize, usize, f64)>,
}

impl PathFeature {
    pub fn point(s: usize, c: usize) -> Self {
        Self {
            terms: vec![(s, c, 1.0)],
        }
    }

    pub fn eval(&self, values: &[f64], dim: usize) -> f64 {
        self.terms.iter().map(|&(s, c, w)| w * values[s * dim + c]).sum()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.terms.iter().map(|t| t.0).max()
    }
}

/// Coefficient functional `(sigma, b)` of a path-dependent SDE.
///
/// Buffers are row-major: `sigma` is `d x m`, first partials are stacked per
/// feature (`K x d x m` and `K x d`), second partials per feature pair.
pub trait CoefficientModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;

    /// Declared lower bound `c` with `sigma sigma^* >= c I`.
    fn ellipticity_floor(&self) -> f64 {
        0.0
    }

    /// Highest order of partial derivatives the model supplies.
    fn smoothness(&self) -> usize {
        2
    }

    /// Linear path features read at grid time `t_index`. They may only
    /// reference grid indices `<= t_index`.
    fn features(&self, t_index: usize, grid: &TimeGrid) -> Vec<PathFeature>;

    fn coefficients(
        &self,
        t_index: usize,
        grid: &TimeGrid,
        features: &[f64],
        sigma: &mut [f64],
        drift: &mut [f64],
    );

    fn coefficient_gradients(
        &self,
        t_index: usize,
        grid: &TimeGrid,
        features: &[f64],
        dsigma: &mut [f64],
        ddrift: &mut [f64],
    );

    fn coefficient_hessians(
        &self,
        t_index: usize,
        grid: &TimeGrid,
        features: &[f64],
        d2sigma: &mut [f64],
        d2drift: &mut [f64],
    );

    /// For scalar Markovian models: `sigma` and `b` with their first three
    /// derivatives at state `x`.
    fn markovian_scalar(&self, _t_index: usize, _x: f64) -> Option<[[f64; 4]; 2]> {
        None
    }
}

/// Features of every step of a grid, validated for adaptedness once.
#[derive(Debug, Clone)]
pub struct Stencil {
    grid: TimeGrid,
    steps: Vec<Vec<PathFeature>>,
}

impl Stencil {
    pub fn new(model: &dyn CoefficientModel, grid: &TimeGrid) -> Result<Self> {
        let d = model.state_dim();
        let steps = (0..=grid.steps())
            .map(|l| {
                let feats = model.features(l, grid);
                for f in &feats {
                    if let Some(&(s, c, _)) = f.terms.iter().find(|t| t.0 > l || t.1 >= d) {
                        return Err(Error::ShapeMismatch(format!(
                            "feature at step {l} reads path index ({s}, {c}); the model is not adapted"
                        )));
                    }
                }
                Ok(feats)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid: *grid, steps })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn at(&self, t_index: usize) -> &[PathFeature] {
        &self.steps[t_index]
    }

    pub fn eval(&self, t_index: usize, values: &[f64], dim: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.steps[t_index].iter().map(|f| f.eval(values, dim)));
    }
}

/// Coefficients at one grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    /// `d x m`, row-major.
    pub sigma: Vec<f64>,
    pub drift: Vec<f64>,
}

/// Partials of `sigma` (`d x m`) and `b` (`d`) with respect to one path value.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientPartial {
    pub dsigma: Vec<f64>,
    pub ddrift: Vec<f64>,
}

impl CoefficientPartial {
    fn zeros(d: usize, m: usize) -> Self {
        Self {
            dsigma: vec![0.0; d * m],
            ddrift: vec![0.0; d],
        }
    }

    fn is_zero(&self) -> bool {
        self.dsigma.iter().chain(&self.ddrift).all(|&v| v == 0.0)
    }
}

/// Nonzero first partials keyed by `(grid index, component)`.
pub type SparsePartials = BTreeMap<(usize, usize), CoefficientPartial>;
/// Nonzero second partials keyed by both path coordinates (both orders present).
pub type SparseSecondPartials = BTreeMap<((usize, usize), (usize, usize)), CoefficientPartial>;

fn check_index(t_index: usize, path: &DiscretePath) -> Result<()> {
    if t_index > path.grid().steps() {
        return Err(invalid(
            "t_index",
            format!("{t_index} is outside the grid [0, {}]", path.grid().steps()),
        ));
    }
    Ok(())
}

fn check_dims(model: &dyn CoefficientModel, path: &DiscretePath) -> Result<()> {
    if model.state_dim() != path.dim() {
        return Err(Error::ShapeMismatch(format!(
            "model state dimension {} vs path dimension {}",
            model.state_dim(),
            path.dim()
        )));
    }
    Ok(())
}

fn feature_values(model: &dyn CoefficientModel, t_index: usize, path: &DiscretePath) -> (Vec<PathFeature>, Vec<f64>) {
    let feats = model.features(t_index, path.grid());
    let vals = feats.iter().map(|f| f.eval(path.values(), path.dim())).collect();
    (feats, vals)
}

/// `(sigma, b)` at `t_index` on the path stopped there.
pub fn eval_coeffs(
    model: &dyn CoefficientModel,
    t_index: usize,
    path: &DiscretePath,
) -> Result<Coefficients> {
    check_index(t_index, path)?;
    check_dims(model, path)?;
    let stopped = path.stopped(t_index);
    let (_, vals) = feature_values(model, t_index, &stopped);
    let (d, m) = (model.state_dim(), model.noise_dim());
    let mut sigma = vec![0.0; d * m];
    let mut drift = vec![0.0; d];
    model.coefficients(t_index, path.grid(), &vals, &mut sigma, &mut drift);
    Ok(Coefficients { sigma, drift })
}

/// Nonzero partials of `(sigma, b)` with respect to each consulted path value.
pub fn coeff_gradients(
    model: &dyn CoefficientModel,
    t_index: usize,
    path: &DiscretePath,
) -> Result<SparsePartials> {
    check_index(t_index, path)?;
    check_dims(model, path)?;
    if model.smoothness() < 1 {
        return Err(Error::MissingDerivative("model declares no first derivatives".into()));
    }
    let (d, m) = (model.state_dim(), model.noise_dim());
    let (feats, vals) = feature_values(model, t_index, &path.stopped(t_index));
    let k = feats.len();
    let mut ds = vec![0.0; k * d * m];
    let mut db = vec![0.0; k * d];
    model.coefficient_gradients(t_index, path.grid(), &vals, &mut ds, &mut db);
    let mut out = SparsePartials::new();
    for (a, f) in feats.iter().enumerate() {
        for &(s, c, w) in &f.terms {
            let e = out
                .entry((s, c))
                .or_insert_with(|| CoefficientPartial::zeros(d, m));
            for (x, y) in e.dsigma.iter_mut().zip(&ds[a * d * m..(a + 1) * d * m]) {
                *x += w * y;
            }
            for (x, y) in e.ddrift.iter_mut().zip(&db[a * d..(a + 1) * d]) {
                *x += w * y;
            }
        }
    }
    out.retain(|_, v| !v.is_zero());
    Ok(out)
}

/// Nonzero second partials of `(sigma, b)`.
pub fn coeff_hessians(
    model: &dyn CoefficientModel,
    t_index: usize,
    path: &DiscretePath,
) -> Result<SparseSecondPartials> {
    check_index(t_index, path)?;
    check_dims(model, path)?;
    if model.smoothness() < 2 {
        return Err(Error::MissingDerivative("model declares no second derivatives".into()));
    }
    let (d, m) = (model.state_dim(), model.noise_dim());
    let (feats, vals) = feature_values(model, t_index, &path.stopped(t_index));
    let k = feats.len();
    let mut ds = vec![0.0; k * k * d * m];
    let mut db = vec![0.0; k * k * d];
    model.coefficient_hessians(t_index, path.grid(), &vals, &mut ds, &mut db);
    let mut out = SparseSecondPartials::new();
    for (a, fa) in feats.iter().enumerate() {
        for (b, fb) in feats.iter().enumerate() {
            let blk = a * k + b;
            for &(s, c, wa) in &fa.terms {
                for &(s2, c2, wb) in &fb.terms {
                    let e = out
                        .entry(((s, c), (s2, c2)))
                        .or_insert_with(|| CoefficientPartial::zeros(d, m));
                    let w = wa * wb;
                    for (x, y) in e.dsigma.iter_mut().zip(&ds[blk * d * m..(blk + 1) * d * m]) {
                        *x += w * y;
                    }
                    for (x, y) in e.ddrift.iter_mut().zip(&db[blk * d..(blk + 1) * d]) {
                        *x += w * y;
                    }
                }
            }
        }
    }
    out.retain(|_, v| !v.is_zero());
    Ok(out)
}

/// Outcome of an empirical ellipticity check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticityReport {
    /// Smallest eigenvalue of `sigma sigma^*` seen over all paths and times.
    pub min_eigenvalue: f64,
    pub declared_floor: f64,
    pub passes: bool,
}

/// Smallest eigenvalue of `sigma sigma^*` over every grid time of every path.
pub fn check_ellipticity(
    model: &dyn CoefficientModel,
    sample_paths: &[DiscretePath],
) -> Result<EllipticityReport> {
    let (d, m) = (model.state_dim(), model.noise_dim());
    let mut min_eig = f64::INFINITY;
    for path in sample_paths {
        for l in 0..=path.grid().steps() {
            let coeffs = eval_coeffs(model, l, path)?;
            let s = DMatrix::from_row_slice(d, m, &coeffs.sigma);
            let sst = &s * s.transpose();
            let eig = sst.symmetric_eigenvalues().min();
            min_eig = min_eig.min(eig);
        }
    }
    let c = model.ellipticity_floor();
    Ok(EllipticityReport {
        min_eigenvalue: min_eig,
        declared_floor: c,
        passes: min_eig >= c,
    })
}
