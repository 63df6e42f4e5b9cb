//! Smooth cutoffs and the localization statistic `R_{F1,F2}`.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::wiener::{inner_functional, malliavin_inner, Functional, FunctionalState, TimeGrid};

use super::covariance;

/// Which of the two nested cutoffs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum Cutoff {
    Psi,
    Psi1,
}

/// Transition bands `(a, b)`: the cutoff is 1 left of `a` and 0 right of `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CutoffSpec {
    pub psi: [f64; 2],
    pub psi1: [f64; 2],
}

impl Default for CutoffSpec {
    fn default() -> Self {
        Self {
            psi: [0.125, 0.25],
            psi1: [0.25, 0.5],
        }
    }
}

impl CutoffSpec {
    pub fn band(&self, which: Cutoff) -> [f64; 2] {
        match which {
            Cutoff::Psi => self.psi,
            Cutoff::Psi1 => self.psi1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for [a, b] in [self.psi, self.psi1] {
            if !(0.0 <= a && a < b && b.is_finite()) {
                return Err(invalid("cutoff", format!("band ({a}, {b}) is not an interval in [0, inf)")));
            }
        }
        if self.psi1[0] < self.psi[1] {
            return Err(invalid(
                "cutoff",
                "psi1 must equal 1 wherever psi is nonzero",
            ));
        }
        Ok(())
    }
}

/// `q(s) = 1 / (1 + exp(1/s - 1/(1-s)))` and three derivatives, `0 < s < 1`.
fn glue(s: f64) -> [f64; 4] {
    let t = 1.0 - s;
    let h = 1.0 / s - 1.0 / t;
    let l = 1.0 / (1.0 + h.exp());
    let w = l * (1.0 - l);
    if w == 0.0 {
        return [l, 0.0, 0.0, 0.0];
    }
    let l1 = -w;
    let l2 = w * (1.0 - 2.0 * l);
    let l3 = -w * (1.0 - 6.0 * l + 6.0 * l * l);
    let h1 = -1.0 / (s * s) - 1.0 / (t * t);
    let h2 = 2.0 / (s * s * s) - 2.0 / (t * t * t);
    let h3 = -6.0 / s.powi(4) - 6.0 / t.powi(4);
    [
        l,
        l1 * h1,
        l2 * h1 * h1 + l1 * h2,
        l3 * h1.powi(3) + 3.0 * l2 * h1 * h2 + l1 * h3,
    ]
}

/// Value and first three derivatives of the cutoff at `x >= 0`.
pub fn cutoff_derivs(spec: &CutoffSpec, which: Cutoff, x: f64) -> Result<[f64; 4]> {
    if !(x >= 0.0) {
        return Err(invalid("x", format!("cutoffs are defined on [0, inf), got {x}")));
    }
    let [a, b] = spec.band(which);
    if x <= a {
        return Ok([1.0, 0.0, 0.0, 0.0]);
    }
    if x >= b {
        return Ok([0.0; 4]);
    }
    let c = -1.0 / (b - a);
    let q = glue((b - x) / (b - a));
    Ok([q[0], q[1] * c, q[2] * c * c, q[3] * c * c * c])
}

pub fn cutoff(spec: &CutoffSpec, which: Cutoff, x: f64) -> Result<f64> {
    cutoff_derivs(spec, which, x).map(|d| d[0])
}

fn check_pair(f1: &FunctionalState, f2: &FunctionalState) -> Result<()> {
    if f1.dim() != f2.dim() || f1.shape() != f2.shape() {
        return Err(Error::ShapeMismatch(
            "localization needs both functionals on the same increments".into(),
        ));
    }
    Ok(())
}

/// `R = |D(F1 - F2)|_H^2 (1 + |Sigma_{F1}|^2)^{(d-1)/2} / det Sigma_{F1}`,
/// with `|.|` the Frobenius norm; `+inf` when the determinant vanishes and
/// the numerator does not.
pub fn localization_r(f1: &FunctionalState, f2: &FunctionalState, grid: &TimeGrid) -> Result<f64> {
    check_pair(f1, f2)?;
    let mut num = 0.0;
    for (a, b) in f1.components().iter().zip(f2.components()) {
        let (ga, gb) = match (a.grad(), b.grad()) {
            (Some(x), Some(y)) => (x, y),
            _ => return Err(Error::MissingDerivative("localization needs gradients".into())),
        };
        let diff: Vec<f64> = ga.as_slice().iter().zip(gb.as_slice()).map(|(x, y)| x - y).collect();
        let diff = crate::wiener::GradientField::from_vec(ga.shape(), diff)?;
        num += malliavin_inner(&diff, &diff, grid)?;
    }
    if num == 0.0 {
        return Ok(0.0);
    }
    let cov = covariance(f1, grid)?;
    if !(cov.det > 0.0) {
        return Ok(f64::INFINITY);
    }
    let d = f1.dim() as f64;
    Ok(num * (1.0 + cov.frobenius_sq()).powf((d - 1.0) / 2.0) / cov.det)
}

/// `R` as a functional one order below the inputs, for `d <= 2`. The
/// caller guarantees a nondegenerate `Sigma_{F1}`.
pub fn localization_r_functional(
    f1: &FunctionalState,
    f2: &FunctionalState,
    grid: &TimeGrid,
) -> Result<Functional> {
    check_pair(f1, f2)?;
    let dt = grid.dt();
    let diff = f1.sub(f2)?;
    let c = f1.components();
    let num = diff
        .components()
        .iter()
        .map(|x| inner_functional(x, x, dt))
        .reduce(|a, b| a.add(&b))
        .expect("at least one component");
    let s = |i: usize, j: usize| inner_functional(&c[i], &c[j], dt);
    match f1.dim() {
        1 => Ok(num.mul(&s(0, 0).recip())),
        2 => {
            let (a, b, e) = (s(0, 0), s(0, 1), s(1, 1));
            let det = a.mul(&e).sub(&b.mul(&b));
            let frob = a.mul(&a).add(&b.mul(&b).scale(2.0)).add(&e.mul(&e)).offset(1.0);
            let v = frob.value();
            let sqrt = frob.compose([
                v.sqrt(),
                0.5 / v.sqrt(),
                -0.25 / v.powf(1.5),
                0.375 / v.powf(2.5),
            ]);
            Ok(num.mul(&sqrt).mul(&det.recip()))
        }
        d => Err(Error::Unsupported(format!("localization functional for d = {d}"))),
    }
}
