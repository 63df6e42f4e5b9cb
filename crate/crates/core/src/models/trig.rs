//! Trigonometric-polynomial coefficient expressions.
//!
//! A coefficient is a sum of terms `coef * f(arg0) * g(arg1)` with each factor
//! drawn from `{1, x, sin x, cos x}`. This is enough for the sinusoidal
//! perturbations of constants used by the built-in models, and it keeps every
//! derivative available in closed form.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum Factor {
    #[default]
    One,
    Id,
    Sin,
    Cos,
}

impl Factor {
    /// Value and first three derivatives at `x`.
    pub fn derivs(self, x: f64) -> [f64; 4] {
        match self {
            Factor::One => [1.0, 0.0, 0.0, 0.0],
            Factor::Id => [x, 1.0, 0.0, 0.0],
            Factor::Sin => {
                let (s, c) = x.sin_cos();
                [s, c, -s, -c]
            }
            Factor::Cos => {
                let (s, c) = x.sin_cos();
                [c, -s, -c, s]
            }
        }
    }

    /// `(sup |f|, sup |f'|)` over the real line.
    fn sup_bounds(self) -> (f64, f64) {
        match self {
            Factor::One => (1.0, 0.0),
            Factor::Id => (f64::INFINITY, 1.0),
            Factor::Sin | Factor::Cos => (1.0, 1.0),
        }
    }

    /// `(a, b)` with `|f(x)| <= a + b |x|`.
    fn growth(self) -> (f64, f64) {
        match self {
            Factor::Id => (0.0, 1.0),
            _ => (1.0, 0.0),
        }
    }
}

/// One term `coef * f0(arg0) * f1(arg1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub coef: f64,
    pub factors: [Factor; 2],
}

impl Term {
    pub fn constant(coef: f64) -> Self {
        Self {
            coef,
            factors: [Factor::One; 2],
        }
    }

    pub fn new(coef: f64, f0: Factor, f1: Factor) -> Self {
        Self {
            coef,
            factors: [f0, f1],
        }
    }
}

fn product_bound(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

/// A sum of [`Term`]s in two arguments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrigExpr {
    terms: Vec<Term>,
}

impl TrigExpr {
    pub fn new(terms: Vec<Term>) -> Self {
        Self { terms }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![Term::constant(c)])
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn value(&self, args: [f64; 2]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coef * t.factors[0].derivs(args[0])[0] * t.factors[1].derivs(args[1])[0])
            .sum()
    }

    pub fn gradient(&self, args: [f64; 2]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for t in &self.terms {
            let a = t.factors[0].derivs(args[0]);
            let b = t.factors[1].derivs(args[1]);
            g[0] += t.coef * a[1] * b[0];
            g[1] += t.coef * a[0] * b[1];
        }
        g
    }

    pub fn hessian(&self, args: [f64; 2]) -> [[f64; 2]; 2] {
        let mut h = [[0.0; 2]; 2];
        for t in &self.terms {
            let a = t.factors[0].derivs(args[0]);
            let b = t.factors[1].derivs(args[1]);
            h[0][0] += t.coef * a[2] * b[0];
            h[0][1] += t.coef * a[1] * b[1];
            h[1][1] += t.coef * a[0] * b[2];
        }
        h[1][0] = h[0][1];
        h
    }

    /// Value and three derivatives in the first argument, the second held at 0.
    pub fn univariate(&self, x: f64) -> [f64; 4] {
        let mut out = [0.0; 4];
        for t in &self.terms {
            let a = t.factors[0].derivs(x);
            let b0 = t.factors[1].derivs(0.0)[0];
            for (o, ai) in out.iter_mut().zip(a) {
                *o += t.coef * ai * b0;
            }
        }
        out
    }

    pub fn uses_arg(&self, i: usize) -> bool {
        self.terms
            .iter()
            .any(|t| t.coef != 0.0 && t.factors[i] != Factor::One)
    }

    /// Upper bound on `sup |d expr / d arg_i|`; infinite when a linear factor
    /// multiplies a non-constant one.
    pub fn derivative_bound(&self, i: usize) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let own = t.factors[i].sup_bounds().1;
                let other = t.factors[1 - i].sup_bounds().0;
                t.coef.abs() * product_bound(own, other)
            })
            .sum()
    }

    /// `(a, b)` with `|expr| <= a + b * max|arg|`; `b` is infinite for
    /// superlinear terms.
    pub fn growth_bound(&self) -> (f64, f64) {
        let mut acc = (0.0, 0.0);
        for t in &self.terms {
            let (a0, b0) = t.factors[0].growth();
            let (a1, b1) = t.factors[1].growth();
            let c = t.coef.abs();
            acc.0 += c * a0 * a1;
            acc.1 += if b0 * b1 > 0.0 {
                f64::INFINITY
            } else {
                c * (a0 * b1 + b0 * a1)
            };
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(e: &TrigExpr, args: [f64; 2]) {
        let h = 1e-6;
        let g = e.gradient(args);
        let hs = e.hessian(args);
        for i in 0..2 {
            let mut p = args;
            let mut m = args;
            p[i] += h;
            m[i] -= h;
            let fd = (e.value(p) - e.value(m)) / (2.0 * h);
            assert!((g[i] - fd).abs() < 1e-8, "grad {i}: {} vs {fd}", g[i]);
            let gp = e.gradient(p);
            let gm = e.gradient(m);
            for j in 0..2 {
                let fd2 = (gp[j] - gm[j]) / (2.0 * h);
                assert!((hs[i][j] - fd2).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn derivatives_match_differences() {
        let e = TrigExpr::new(vec![
            Term::constant(1.0),
            Term::new(0.2, Factor::Sin, Factor::Cos),
            Term::new(-0.4, Factor::Id, Factor::One),
            Term::new(0.3, Factor::Cos, Factor::Id),
        ]);
        for args in [[0.0, 0.0], [0.7, -1.2], [2.5, 0.4]] {
            fd_check(&e, args);
        }
    }

    #[test]
    fn cross_term_example() {
        let e = TrigExpr::new(vec![
            Term::constant(1.0),
            Term::new(0.2, Factor::Sin, Factor::Cos),
        ]);
        assert_eq!(e.hessian([0.0, 0.0])[0][1], 0.0);
        let h = e.hessian([0.0, std::f64::consts::FRAC_PI_2])[0][1];
        assert!((h + 0.2).abs() < 1e-15);
    }

    #[test]
    fn bounds() {
        let e = TrigExpr::new(vec![Term::constant(1.0), Term::new(0.25, Factor::Sin, Factor::One)]);
        assert_eq!(e.derivative_bound(0), 0.25);
        assert_eq!(e.derivative_bound(1), 0.0);
        assert_eq!(e.growth_bound(), (1.25, 0.0));
        let lin = TrigExpr::new(vec![Term::new(2.0, Factor::Id, Factor::One)]);
        assert_eq!(lin.derivative_bound(0), 2.0);
        assert_eq!(lin.growth_bound(), (0.0, 2.0));
        let bad = TrigExpr::new(vec![Term::new(1.0, Factor::Id, Factor::Sin)]);
        assert!(bad.derivative_bound(1).is_infinite());
        let quad = TrigExpr::new(vec![Term::new(1.0, Factor::Id, Factor::Id)]);
        assert!(quad.growth_bound().1.is_infinite());
    }
}
