//! Density estimators for terminal values: the integration-by-parts
//! estimator `p(y) = E[1{F > y} H]`, a Gaussian-kernel baseline, and grid
//! Hölder norms.

mod study;

pub(crate) use study::unit_weight;
pub use study::{
    density_rate_study, localized_density_difference, BetaRate, CrossCheck, DensityRateStudy,
    DensityStudyParams, LadderRow, LocalizedDifference, LocalizedParams, MethodChoice, QuerySpec,
    Perturbation,
};

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Fewest samples the kernel estimator accepts.
pub const MIN_KERNEL_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityMethod {
    Ibp,
    Kernel,
}

impl fmt::Display for DensityMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DensityMethod::Ibp => "ibp",
            DensityMethod::Kernel => "kernel",
        })
    }
}

/// Pointwise density estimate on a sorted query grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub query_points: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub method: DensityMethod,
}

impl DensityEstimate {
    /// Trapezoidal integral over the query range.
    pub fn mass(&self) -> f64 {
        trapezoid(&self.query_points, &self.values)
    }
}

pub(crate) fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

fn check_query(query_points: &[f64]) -> Result<()> {
    if query_points.is_empty() {
        return Err(invalid("query_points", "empty query grid"));
    }
    if query_points.iter().any(|y| !y.is_finite()) {
        return Err(invalid("query_points", "non-finite query point"));
    }
    if query_points.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("query_points", "query points must be sorted"));
    }
    Ok(())
}

pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

/// `K_h(u) = phi(u / h) / h`.
pub(crate) fn kernel(u: f64, h: f64) -> f64 {
    normal_pdf(u, 0.0, h)
}

/// `p(y) = mean of 1{F > y} H` from `(F, H)` samples, with the per-point
/// standard error of the mean.
pub fn ibp_density(samples: &[(f64, f64)], query_points: &[f64]) -> Result<DensityEstimate> {
    if samples.is_empty() {
        return Err(invalid("samples", "no samples"));
    }
    check_query(query_points)?;
    if samples.iter().any(|(f, h)| !f.is_finite() || !h.is_finite()) {
        return Err(Error::NonFinite { step: 0 });
    }
    let n = samples.len() as f64;
    let mut values = Vec::with_capacity(query_points.len());
    let mut stderr = Vec::with_capacity(query_points.len());
    for &y in query_points {
        let (mut s, mut s2) = (0.0, 0.0);
        for &(f, h) in samples {
            if f > y {
                s += h;
                s2 += h * h;
            }
        }
        let mean = s / n;
        let var = if samples.len() > 1 {
            ((s2 - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        values.push(mean);
        stderr.push((var / n).sqrt());
    }
    Ok(DensityEstimate {
        query_points: query_points.to_vec(),
        values,
        stderr,
        method: DensityMethod::Ibp,
    })
}

/// Mean and unbiased standard deviation.
pub(crate) fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// `1.06 * std * N^{-1/5}`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(invalid("samples", "a bandwidth needs at least two samples"));
    }
    let (_, sd) = mean_std(samples);
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(invalid("samples", "samples have zero variance"));
    }
    Ok(1.06 * sd * (samples.len() as f64).powf(-0.2))
}

/// Gaussian-kernel estimate; the bandwidth defaults to Silverman's rule.
/// Standard errors use the asymptotic variance `p(y) R(K) / (N h)` with
/// `R(K) = 1 / (2 sqrt(pi))`.
pub fn kernel_density(samples: &[f64], query_points: &[f64], bandwidth: Option<f64>) -> Result<DensityEstimate> {
    if samples.len() < MIN_KERNEL_SAMPLES {
        return Err(invalid(
            "samples",
            format!("the kernel estimator needs at least {MIN_KERNEL_SAMPLES} samples, got {}", samples.len()),
        ));
    }
    check_query(query_points)?;
    if samples.iter().any(|f| !f.is_finite()) {
        return Err(Error::NonFinite { step: 0 });
    }
    let (_, sd) = mean_std(samples);
    if !(sd > 0.0) {
        return Err(invalid("samples", "samples have zero variance"));
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(invalid("bandwidth", format!("must be positive, got {h}"))),
        None => silverman_bandwidth(samples)?,
    };
    let n = samples.len() as f64;
    let rk = 1.0 / (2.0 * PI.sqrt());
    let values: Vec<f64> = query_points
        .iter()
        .map(|&y| samples.iter().map(|&x| kernel(y - x, h)).sum::<f64>() / n)
        .collect();
    let stderr = values.iter().map(|&p| (p * rk / (n * h)).sqrt()).collect();
    Ok(DensityEstimate {
        query_points: query_points.to_vec(),
        values,
        stderr,
        method: DensityMethod::Kernel,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderNormResult {
    pub beta: f64,
    pub sup_term: f64,
    pub holder_quotient_term: f64,
    pub total: f64,
}

/// Index pair attaining the Hölder quotient, if any pair differs.
pub(crate) fn holder_argmax(values: &[f64], spacing: f64, beta: f64) -> (f64, Option<(usize, usize)>) {
    let mut best = 0.0;
    let mut arg = None;
    for a in 0..values.len() {
        for b in a + 1..values.len() {
            let q = (values[a] - values[b]).abs() / (spacing * (b - a) as f64).powf(beta);
            if q > best {
                best = q;
                arg = Some((a, b));
            }
        }
    }
    (best, arg)
}

/// `max |f| + max_{x != y} |f(x) - f(y)| / |x - y|^beta` over a uniform grid.
pub fn holder_norm(values: &[f64], spacing: f64, beta: f64) -> Result<HolderNormResult> {
    if !(0.0..1.0).contains(&beta) {
        return Err(invalid("beta", format!("need 0 <= beta < 1, got {beta}")));
    }
    if values.len() < 2 {
        return Err(invalid("values", "need at least two grid points"));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(invalid("spacing", format!("must be positive, got {spacing}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("values", "non-finite value"));
    }
    let sup_term = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let (quotient, _) = holder_argmax(values, spacing, beta);
    Ok(HolderNormResult {
        beta,
        sup_term,
        holder_quotient_term: quotient,
        total: sup_term + quotient,
    })
}

/// `points` equally spaced values on `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(invalid("query", format!("cannot place {points} points on [{lo}, {hi}]")));
    }
    let step = (hi - lo) / (points - 1) as f64;
    Ok((0..points)
        .map(|i| if i + 1 == points { hi } else { lo + step * i as f64 })
        .collect())
}
