//! Built-in coefficient models and their JSON description.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::path::interpolation_stencil;
use super::trig::{Factor, Term, TrigExpr};
use super::{CoefficientModel, PathFeature};
use crate::error::{Error, Result};
use crate::wiener::TimeGrid;

/// Lipschitz and linear-growth constants in the sup norm on paths:
/// `|f(phi) - f(psi)| <= lipschitz * |phi - psi|` and
/// `|f(phi)| <= growth * (1 + |phi|)`, for both `sigma` and `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelBounds {
    pub lipschitz: f64,
    pub growth: f64,
}

impl ModelBounds {
    /// A single constant valid for both inequalities.
    pub fn c0(&self) -> f64 {
        self.lipschitz.max(self.growth)
    }
}

/// The parametrized models shipped with the library.
///
/// Scalar kinds (`d = m = 1`) take `sigma` and `b` as trigonometric
/// expressions of up to two path features: the current value `x(t)` for
/// Markovian models, `(x(t - tau), x(t))` for the discrete delay and
/// `(int_0^t x(s) ds, x(t))` for the distributed delay.
#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinModel {
    Constant {
        d: usize,
        m: usize,
        sigma: Vec<f64>,
        drift: Vec<f64>,
        floor: f64,
    },
    Scalar {
        kind: ScalarKind,
        sigma: TrigExpr,
        drift: TrigExpr,
        floor: f64,
    },
}

/// Which path features a scalar model reads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarKind {
    Markovian,
    Delay { tau: f64 },
    DistributedDelay,
}

impl BuiltinModel {
    /// `sigma` is `d x m` row-major.
    pub fn constant(d: usize, m: usize, sigma: Vec<f64>, drift: Vec<f64>) -> Result<Self> {
        if d == 0 || m == 0 || sigma.len() != d * m || drift.len() != d {
            return Err(Error::ShapeMismatch(format!(
                "constant model with d={d}, m={m} needs {} sigma and {d} drift entries",
                d * m
            )));
        }
        Ok(Self::Constant {
            d,
            m,
            sigma,
            drift,
            floor: 0.0,
        })
    }

    pub fn scalar_constant(sigma: f64, drift: f64) -> Self {
        Self::Constant {
            d: 1,
            m: 1,
            sigma: vec![sigma],
            drift: vec![drift],
            floor: 0.0,
        }
    }

    pub fn markovian(sigma: TrigExpr, drift: TrigExpr) -> Result<Self> {
        if sigma.uses_arg(1) || drift.uses_arg(1) {
            return Err(Error::Config(
                "a Markovian model depends on a single argument".into(),
            ));
        }
        Ok(Self::Scalar {
            kind: ScalarKind::Markovian,
            sigma,
            drift,
            floor: 0.0,
        })
    }

    pub fn delay(sigma: TrigExpr, drift: TrigExpr, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(crate::error::invalid("tau", format!("must be positive, got {tau}")));
        }
        Ok(Self::Scalar {
            kind: ScalarKind::Delay { tau },
            sigma,
            drift,
            floor: 0.0,
        })
    }

    pub fn distributed_delay(sigma: TrigExpr, drift: TrigExpr) -> Self {
        Self::Scalar {
            kind: ScalarKind::DistributedDelay,
            sigma,
            drift,
            floor: 0.0,
        }
    }

    /// Declares the ellipticity floor `c`.
    pub fn with_floor(mut self, c: f64) -> Self {
        match &mut self {
            Self::Constant { floor, .. } | Self::Scalar { floor, .. } => *floor = c,
        }
        self
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Self::Constant { .. })
    }

    pub fn is_markovian(&self) -> bool {
        matches!(
            self,
            Self::Constant { .. }
                | Self::Scalar {
                    kind: ScalarKind::Markovian,
                    ..
                }
        )
    }

    /// Constants of the Lipschitz and growth conditions on `[0, horizon]`.
    pub fn bounds(&self, horizon: f64) -> ModelBounds {
        match self {
            Self::Constant { sigma, drift, .. } => {
                let ns = sigma.iter().map(|v| v * v).sum::<f64>().sqrt();
                let nb = drift.iter().map(|v| v * v).sum::<f64>().sqrt();
                ModelBounds {
                    lipschitz: 0.0,
                    growth: ns.max(nb),
                }
            }
            Self::Scalar {
                kind, sigma, drift, ..
            } => {
                // sup-norm Lipschitz constant of each feature as a path map
                let scale = match kind {
                    ScalarKind::Markovian => [1.0, 0.0],
                    ScalarKind::Delay { .. } => [1.0, 1.0],
                    ScalarKind::DistributedDelay => [horizon, 1.0],
                };
                let lip = |e: &TrigExpr| {
                    (0..2)
                        .filter(|&i| scale[i] > 0.0)
                        .map(|i| e.derivative_bound(i) * scale[i])
                        .sum::<f64>()
                };
                let growth = |e: &TrigExpr| {
                    let (a, b) = e.growth_bound();
                    let s = scale[0].max(scale[1]);
                    if b == 0.0 {
                        a
                    } else {
                        a.max(b * s)
                    }
                };
                ModelBounds {
                    lipschitz: lip(sigma).max(lip(drift)),
                    growth: growth(sigma).max(growth(drift)),
                }
            }
        }
    }

    fn scalar_args(features: &[f64]) -> [f64; 2] {
        [
            features.first().copied().unwrap_or(0.0),
            features.get(1).copied().unwrap_or(0.0),
        ]
    }
}

impl CoefficientModel for BuiltinModel {
    fn state_dim(&self) -> usize {
        match self {
            Self::Constant { d, .. } => *d,
            Self::Scalar { .. } => 1,
        }
    }

    fn noise_dim(&self) -> usize {
        match self {
            Self::Constant { m, .. } => *m,
            Self::Scalar { .. } => 1,
        }
    }

    fn ellipticity_floor(&self) -> f64 {
        match self {
            Self::Constant { floor, .. } | Self::Scalar { floor, .. } => *floor,
        }
    }

    fn features(&self, t_index: usize, grid: &TimeGrid) -> Vec<PathFeature> {
        let Self::Scalar { kind, .. } = self else {
            return Vec::new();
        };
        let now = PathFeature::point(t_index, 0);
        match *kind {
            ScalarKind::Markovian => vec![now],
            ScalarKind::Delay { tau } => {
                let lagged = interpolation_stencil(grid, grid.node(t_index) - tau)
                    .into_iter()
                    .map(|(s, w)| (s, 0, w))
                    .collect();
                vec![PathFeature { terms: lagged }, now]
            }
            ScalarKind::DistributedDelay => {
                let dt = grid.dt();
                let terms = (0..=t_index)
                    .filter(|_| t_index > 0)
                    .map(|s| {
                        let w = if s == 0 || s == t_index { 0.5 * dt } else { dt };
                        (s, 0, w)
                    })
                    .collect();
                vec![PathFeature { terms }, now]
            }
        }
    }

    fn coefficients(
        &self,
        _t_index: usize,
        _grid: &TimeGrid,
        features: &[f64],
        sigma_out: &mut [f64],
        drift_out: &mut [f64],
    ) {
        match self {
            Self::Constant { sigma, drift, .. } => {
                sigma_out.copy_from_slice(sigma);
                drift_out.copy_from_slice(drift);
            }
            Self::Scalar { sigma, drift, .. } => {
                let args = Self::scalar_args(features);
                sigma_out[0] = sigma.value(args);
                drift_out[0] = drift.value(args);
            }
        }
    }

    fn coefficient_gradients(
        &self,
        _t_index: usize,
        _grid: &TimeGrid,
        features: &[f64],
        dsigma: &mut [f64],
        ddrift: &mut [f64],
    ) {
        if let Self::Scalar { sigma, drift, .. } = self {
            let args = Self::scalar_args(features);
            let gs = sigma.gradient(args);
            let gb = drift.gradient(args);
            for a in 0..features.len() {
                dsigma[a] = gs[a];
                ddrift[a] = gb[a];
            }
        }
    }

    fn coefficient_hessians(
        &self,
        _t_index: usize,
        _grid: &TimeGrid,
        features: &[f64],
        d2sigma: &mut [f64],
        d2drift: &mut [f64],
    ) {
        if let Self::Scalar { sigma, drift, .. } = self {
            let args = Self::scalar_args(features);
            let hs = sigma.hessian(args);
            let hb = drift.hessian(args);
            let k = features.len();
            for a in 0..k {
                for b in 0..k {
                    d2sigma[a * k + b] = hs[a][b];
                    d2drift[a * k + b] = hb[a][b];
                }
            }
        }
    }

    fn markovian_scalar(&self, _t_index: usize, x: f64) -> Option<[[f64; 4]; 2]> {
        match self {
            Self::Constant {
                d: 1,
                m: 1,
                sigma,
                drift,
                ..
            } => Some([[sigma[0], 0.0, 0.0, 0.0], [drift[0], 0.0, 0.0, 0.0]]),
            Self::Scalar {
                kind: ScalarKind::Markovian,
                sigma,
                drift,
                ..
            } => Some([sigma.univariate(x), drift.univariate(x)]),
            _ => None,
        }
    }
}

/// One term of a coefficient in a config file, e.g.
/// `{"coef": 0.25, "u": "sin"}` for `0.25 sin(u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub coef: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Factor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Factor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Factor>,
}

fn markovian_expr(terms: &[TermSpec]) -> Result<TrigExpr> {
    terms
        .iter()
        .map(|t| {
            if t.u.is_some() || t.v.is_some() {
                return Err(Error::Config(
                    "Markovian terms take a factor of `x` only".into(),
                ));
            }
            Ok(Term::new(t.coef, t.x.unwrap_or_default(), Factor::One))
        })
        .collect::<Result<Vec<_>>>()
        .map(TrigExpr::new)
}

fn two_arg_expr(terms: &[TermSpec]) -> Result<TrigExpr> {
    terms
        .iter()
        .map(|t| {
            if t.x.is_some() {
                return Err(Error::Config(
                    "delay terms take factors of `u` and `v`, not `x`".into(),
                ));
            }
            Ok(Term::new(t.coef, t.u.unwrap_or_default(), t.v.unwrap_or_default()))
        })
        .collect::<Result<Vec<_>>>()
        .map(TrigExpr::new)
}

/// Model block of an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Constant {
        /// `d x m`, one row per state component.
        sigma: Vec<Vec<f64>>,
        drift: Vec<f64>,
        #[serde(default)]
        c: f64,
    },
    Markovian {
        sigma: Vec<TermSpec>,
        #[serde(default)]
        drift: Vec<TermSpec>,
        #[serde(default)]
        c: f64,
    },
    Delay {
        sigma: Vec<TermSpec>,
        #[serde(default)]
        drift: Vec<TermSpec>,
        tau: f64,
        #[serde(default)]
        c: f64,
    },
    DistributedDelay {
        sigma: Vec<TermSpec>,
        #[serde(default)]
        drift: Vec<TermSpec>,
        #[serde(default)]
        c: f64,
    },
}

impl ModelSpec {
    pub fn build(&self) -> Result<BuiltinModel> {
        let model = match self {
            Self::Constant { sigma, drift, c } => {
                let d = sigma.len();
                let m = sigma.first().map_or(0, Vec::len);
                if sigma.iter().any(|r| r.len() != m) {
                    return Err(Error::Config("sigma rows have unequal lengths".into()));
                }
                BuiltinModel::constant(d, m, sigma.concat(), drift.clone())
                    .map_err(|e| Error::Config(e.to_string()))?
                    .with_floor(*c)
            }
            Self::Markovian { sigma, drift, c } => {
                BuiltinModel::markovian(markovian_expr(sigma)?, markovian_expr(drift)?)?
                    .with_floor(*c)
            }
            Self::Delay {
                sigma,
                drift,
                tau,
                c,
            } => BuiltinModel::delay(two_arg_expr(sigma)?, two_arg_expr(drift)?, *tau)
                .map_err(|e| Error::Config(e.to_string()))?
                .with_floor(*c),
            Self::DistributedDelay { sigma, drift, c } => {
                BuiltinModel::distributed_delay(two_arg_expr(sigma)?, two_arg_expr(drift)?)
                    .with_floor(*c)
            }
        };
        let c = model.ellipticity_floor();
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::Config(format!("ellipticity floor must be >= 0, got {c}")));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{coeff_gradients, coeff_hessians, eval_coeffs, DiscretePath};

    fn sin_sigma() -> TrigExpr {
        TrigExpr::new(vec![Term::constant(1.0), Term::new(0.25, Factor::Sin, Factor::One)])
    }

    #[test]
    fn markovian_examples() {
        let model = BuiltinModel::markovian(sin_sigma(), TrigExpr::default()).unwrap();
        let g = TimeGrid::new(1.0, 4).unwrap();
        let path = DiscretePath::constant(g, &[0.0]);
        assert_eq!(eval_coeffs(&model, 2, &path).unwrap().sigma, vec![1.0]);
        let grads = coeff_gradients(&model, 2, &path).unwrap();
        assert_eq!(grads.len(), 1);
        assert_eq!(grads[&(2, 0)].dsigma, vec![0.25]);
        // zero second derivative at 0 is filtered out
        assert!(coeff_hessians(&model, 2, &path).unwrap().is_empty());
    }

    #[test]
    fn constant_model_has_no_partials() {
        let model = BuiltinModel::scalar_constant(0.7, 0.1);
        let g = TimeGrid::new(1.0, 3).unwrap();
        let path = DiscretePath::new(g, 1, vec![0.0, 1.0, -2.0, 5.0]).unwrap();
        for l in 0..=3 {
            let c = eval_coeffs(&model, l, &path).unwrap();
            assert_eq!((c.sigma[0], c.drift[0]), (0.7, 0.1));
            assert!(coeff_gradients(&model, l, &path).unwrap().is_empty());
            assert!(coeff_hessians(&model, l, &path).unwrap().is_empty());
        }
    }

    #[test]
    fn delay_prehistory_and_support() {
        let model = BuiltinModel::delay(sin_sigma(), TrigExpr::default(), 0.5).unwrap();
        let g = TimeGrid::new(1.0, 8).unwrap();
        let path = DiscretePath::new(g, 1, (0..9).map(|k| 0.1 * k as f64).collect()).unwrap();
        // t = 0.25 < tau reads x(0) = 0
        assert_eq!(eval_coeffs(&model, 2, &path).unwrap().sigma, vec![1.0]);
        let grads = coeff_gradients(&model, 6, &path).unwrap();
        let keys: Vec<_> = grads.keys().copied().collect();
        assert_eq!(keys, vec![(2, 0)]);
        let two = BuiltinModel::delay(
            TrigExpr::new(vec![
                Term::constant(1.0),
                Term::new(0.2, Factor::Sin, Factor::One),
                Term::new(0.2, Factor::One, Factor::Cos),
            ]),
            TrigExpr::default(),
            0.5,
        )
        .unwrap();
        let keys: Vec<_> = coeff_gradients(&two, 6, &path).unwrap().into_keys().collect();
        assert_eq!(keys, vec![(2, 0), (6, 0)]);
    }

    #[test]
    fn off_grid_delay_splits_weight() {
        let model = BuiltinModel::delay(sin_sigma(), TrigExpr::default(), 0.3).unwrap();
        let g = TimeGrid::new(1.0, 4).unwrap();
        let path = DiscretePath::new(g, 1, vec![0.0, 0.4, 0.8, 1.2, 1.6]).unwrap();
        // t = 0.75, lag 0.45 sits between nodes 1 and 2
        let grads = coeff_gradients(&model, 3, &path).unwrap();
        let keys: Vec<_> = grads.keys().copied().collect();
        assert_eq!(keys, vec![(1, 0), (2, 0)]);
        let u = 0.4 + 0.4 * 0.8;
        let total = grads[&(1, 0)].dsigma[0] + grads[&(2, 0)].dsigma[0];
        assert!((total - 0.25 * f64::cos(u)).abs() < 1e-14);
    }

    #[test]
    fn cross_hessian_example() {
        let sigma = TrigExpr::new(vec![
            Term::constant(1.0),
            Term::new(0.2, Factor::Sin, Factor::Cos),
        ]);
        let model = BuiltinModel::delay(sigma, TrigExpr::default(), 0.5).unwrap();
        let g = TimeGrid::new(1.0, 4).unwrap();
        let v = std::f64::consts::FRAC_PI_2;
        let path = DiscretePath::new(g, 1, vec![0.0, 0.0, 0.0, 0.0, v]).unwrap();
        let h = coeff_hessians(&model, 4, &path).unwrap();
        let cross = &h[&((2, 0), (4, 0))];
        assert!((cross.dsigma[0] + 0.2).abs() < 1e-15);
        assert_eq!(h[&((4, 0), (2, 0))], *cross);
    }

    #[test]
    fn spec_parsing() {
        let json = r#"{"kind":"delay","tau":0.25,"c":0.3,
            "sigma":[{"coef":1.0},{"coef":0.2,"u":"sin"},{"coef":0.2,"v":"cos"}],
            "drift":[{"coef":-0.5,"v":"id"}]}"#;
        let spec: ModelSpec = serde_json::from_str(json).unwrap();
        let model = spec.build().unwrap();
        assert_eq!(model.ellipticity_floor(), 0.3);
        let bad = r#"{"kind":"delay","tau":0.25,"sigma":[],"extra":1}"#;
        assert!(serde_json::from_str::<ModelSpec>(bad).is_err());
        let bad_term = r#"{"kind":"markovian","sigma":[{"coef":1.0,"u":"sin"}]}"#;
        let spec: ModelSpec = serde_json::from_str(bad_term).unwrap();
        assert!(spec.build().is_err());
    }

    #[test]
    fn reported_constants() {
        let m = BuiltinModel::markovian(sin_sigma(), TrigExpr::new(vec![Term::new(0.25, Factor::Cos, Factor::One)]))
            .unwrap();
        let b = m.bounds(1.0);
        assert_eq!(b.lipschitz, 0.25);
        assert_eq!(b.growth, 1.25);
        let dd = BuiltinModel::distributed_delay(
            TrigExpr::new(vec![Term::constant(1.0), Term::new(0.2, Factor::Sin, Factor::One)]),
            TrigExpr::default(),
        );
        assert!((dd.bounds(2.0).lipschitz - 0.4).abs() < 1e-15);
    }
}
