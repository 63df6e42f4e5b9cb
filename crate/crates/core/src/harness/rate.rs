//! Log-log convergence-rate fits.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Result};

/// Ordinary least-squares fit of `log2 error` against `log2 resolution`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
    /// Two-sided 95% Student-t interval for the slope.
    pub slope_ci: [f64; 2],
}

/// Fits a line through `(x, y)` points; needs at least three points and two
/// distinct abscissae.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(invalid(
            "points",
            format!("a rate fit needs at least 3 points, got {}", points.len()),
        ));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(invalid("points", "non-finite coordinate"));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() != points.len() || sxx <= 0.0 {
        return Err(invalid("points", "abscissae must be distinct"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let dof = n - 2.0;
    let slope_stderr = (sse / dof / sxx).sqrt();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    let t = StudentsT::new(0.0, 1.0, dof)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(f64::INFINITY);
    Ok(RateFit {
        slope,
        intercept,
        slope_stderr,
        r_squared,
        slope_ci: [slope - t * slope_stderr, slope + t * slope_stderr],
    })
}

/// One resolution of a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateRow {
    pub level: usize,
    pub steps: usize,
    pub error: f64,
    pub stderr: f64,
}

/// Errors against resolution together with the fitted slope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    /// `None` when fewer than three rows carry a positive error.
    pub fit: Option<RateFit>,
    /// Every error at or below the exactness tolerance.
    pub exact: bool,
    pub seed: u64,
}

/// Errors at or below this are treated as zero.
pub const EXACT_TOLERANCE: f64 = 1e-10;

impl RateTable {
    /// Sorts rows by resolution and fits `log2 error` against `log2 steps`.
    pub fn new(mut rows: Vec<RateRow>, seed: u64) -> Self {
        rows.sort_by_key(|r| r.steps);
        let exact = rows.iter().all(|r| r.error <= EXACT_TOLERANCE);
        let points: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.error > EXACT_TOLERANCE)
            .map(|r| ((r.steps as f64).log2(), r.error.log2()))
            .collect();
        let fit = if exact { None } else { fit_rate(&points).ok() };
        Self {
            rows,
            fit,
            exact,
            seed,
        }
    }

    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    /// True when consecutive errors decrease by more than `z` joint standard
    /// errors.
    pub fn strictly_decreasing(&self, z: f64) -> bool {
        self.rows.windows(2).all(|w| {
            let joint = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
            w[0].error - w[1].error > z * joint
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_lines() {
        let pts: Vec<_> = (0..5).map(|i| (i as f64, 3.0 - 0.5 * i as f64)).collect();
        let f = fit_rate(&pts).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
        let f = fit_rate(&[(0.0, 0.0), (1.0, -1.0), (2.0, -2.0)]).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-14);
        assert_eq!(f.r_squared, 1.0);
    }

    #[test]
    fn degenerate_designs_rejected() {
        assert!(fit_rate(&[(0.0, 1.0), (1.0, 2.0)]).is_err());
        assert!(fit_rate(&[(0.0, 1.0), (0.0, 2.0), (1.0, 0.0)]).is_err());
    }

    #[test]
    fn noisy_fit_interval_contains_slope() {
        let pts = [(3.0, -1.4), (4.0, -2.1), (5.0, -2.4), (6.0, -3.05)];
        let f = fit_rate(&pts).unwrap();
        assert!(f.slope_ci[0] < f.slope && f.slope < f.slope_ci[1]);
        assert!(f.r_squared < 1.0 && f.r_squared > 0.9);
    }

    #[test]
    fn table_flags_exact_studies() {
        let rows = (1..4)
            .map(|l| RateRow {
                level: l,
                steps: 1 << l,
                error: 1e-14,
                stderr: 0.0,
            })
            .collect();
        let t = RateTable::new(rows, 7);
        assert!(t.exact);
        assert!(t.fit.is_none());
    }
}
