//! Density-convergence study over the `k_n = 4^n` ladder and the localized
//! density difference between two functionals on common increments.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{
    holder_argmax, holder_norm, ibp_density, kernel, kernel_density, mean_std, silverman_bandwidth,
    uniform_grid, DensityEstimate, DensityMethod,
};
use crate::error::{invalid, Error, Result};
use crate::euler::{Solver, SECOND_VARIATION_CAP};
use crate::harness::engine::{Engine, MeanVar};
use crate::harness::rate::{fit_rate, RateFit, RateRow, RateTable, EXACT_TOLERANCE};
use crate::models::CoefficientModel;
use crate::weights::{cutoff, ibp_weight_first, localization_r, Cutoff, CutoffSpec};
use crate::wiener::{coarsen, sample_increments, Functional, FunctionalState, IncrementMatrix, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    /// IBP when every level fits under the second-variation cap, otherwise
    /// the kernel estimator with a recorded warning.
    #[default]
    Auto,
    Ibp,
    Kernel,
}

/// Query grid: `points` equally spaced values over `range`, or over
/// `mean +- width_sd * std` of the reference samples when no range is given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_width")]
    pub width_sd: f64,
    #[serde(default)]
    pub range: Option<[f64; 2]>,
}

fn default_points() -> usize {
    41
}

fn default_width() -> f64 {
    4.0
}

impl Default for QuerySpec {
    fn default() -> Self {
        Self {
            points: default_points(),
            width_sd: default_width(),
            range: None,
        }
    }
}

impl QuerySpec {
    pub fn resolve(&self, reference: &[f64]) -> Result<Vec<f64>> {
        match self.range {
            Some([lo, hi]) => uniform_grid(lo, hi, self.points),
            None => {
                if !(self.width_sd > 0.0) {
                    return Err(invalid("query.width_sd", "must be positive"));
                }
                let (mean, sd) = mean_std(reference);
                if !(sd > 0.0) {
                    return Err(invalid(
                        "query",
                        "reference samples have zero spread; give an explicit range",
                    ));
                }
                uniform_grid(mean - self.width_sd * sd, mean + self.width_sd * sd, self.points)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityStudyParams {
    pub horizon: f64,
    pub x0: f64,
    /// Levels `n`, run on `4^n` steps.
    pub levels: Vec<u32>,
    pub reference_level: u32,
    pub num_paths: u64,
    pub betas: Vec<f64>,
    pub query: QuerySpec,
    pub bandwidth: Option<f64>,
    pub method: MethodChoice,
    /// Paths used to compare IBP and kernel estimates on the levels where
    /// IBP is feasible; 0 disables the comparison.
    pub cross_check_paths: u64,
    pub second_variation_cap: usize,
    pub seed: u64,
}

fn steps_of(level: u32) -> Result<usize> {
    if level > 12 {
        return Err(invalid("levels", format!("level {level} gives more than 4^12 steps")));
    }
    Ok(1usize << (2 * level))
}

/// Errors of one Hölder exponent across the levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaRate {
    pub beta: f64,
    /// Rows keyed by level `n` with `steps = 4^n`.
    pub table: RateTable,
    /// Fit of `log2 error` against `n`.
    pub level_fit: Option<RateFit>,
    /// `-slope` of `level_fit`.
    pub theta_hat: Option<f64>,
    pub strictly_decreasing: bool,
}

/// IBP against kernel estimates at one level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossCheck {
    pub steps: usize,
    pub paths: u64,
    /// Largest `|p_ibp - p_kernel| / sqrt(se_ibp^2 + se_kernel^2)` over the
    /// grid points where the IBP estimate has a positive standard error
    /// (beyond the largest sample it is identically zero and carries no
    /// information).
    pub max_z: f64,
    pub agree: bool,
    #[serde(skip)]
    pub ibp: DensityEstimate,
    #[serde(skip)]
    pub kernel: DensityEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityRateStudy {
    pub method: DensityMethod,
    pub bandwidth: Option<f64>,
    pub query_points: Vec<f64>,
    pub reference_steps: usize,
    pub rates: Vec<BetaRate>,
    /// Estimates at each level and at the reference, by step count.
    pub estimates: Vec<(usize, DensityEstimate)>,
    pub cross_checks: Vec<CrossCheck>,
    pub warnings: Vec<String>,
    pub degenerate_samples: u64,
    pub exact: bool,
}

struct Sample {
    /// Terminal values at each level, then the reference.
    f: Vec<f64>,
    /// IBP weights in the same order.
    h: Option<Vec<f64>>,
    degenerate: u64,
}

/// `H_1(X(T), 1)` on one grid; a degenerate covariance yields `None`.
pub(crate) fn unit_weight(solver: &Solver, dw: &IncrementMatrix, x0: f64, cap: usize) -> Result<(f64, Option<f64>)> {
    let f = solver.terminal_state(dw, &[x0], 2, cap)?;
    let g = Functional::constant(f.shape(), 1.0, 1);
    let value = f.component(0).value();
    match ibp_weight_first(&f, &g, 0, dw, solver.grid()) {
        Ok(w) => Ok((value, Some(w.h))),
        Err(Error::Degenerate { .. }) => Ok((value, None)),
        Err(e) => Err(e),
    }
}

fn ibp_feasible(steps: usize, m: usize, cap: usize) -> bool {
    steps * m <= cap
}

/// Hölder norm of the mean of per-path vectors and a delta-method standard
/// error through the maximizing point and pair.
fn norm_with_stderr(
    num_paths: usize,
    mean: &[f64],
    spacing: f64,
    beta: f64,
    contribution: impl Fn(usize, usize) -> f64,
) -> Result<(f64, f64)> {
    let total = holder_norm(mean, spacing, beta)?.total;
    if total == 0.0 {
        return Ok((0.0, 0.0));
    }
    let mut g = vec![0.0; mean.len()];
    let (a, _) = mean
        .iter()
        .enumerate()
        .fold((0, 0.0), |(ia, va), (i, v)| if v.abs() > va { (i, v.abs()) } else { (ia, va) });
    g[a] += mean[a].signum();
    if let (_, Some((p, q))) = holder_argmax(mean, spacing, beta) {
        let w = (mean[p] - mean[q]).signum() / (spacing * (q - p) as f64).powf(beta);
        g[p] += w;
        g[q] -= w;
    }
    let active: Vec<usize> = (0..g.len()).filter(|&i| g[i] != 0.0).collect();
    let mut mv = MeanVar::new();
    for i in 0..num_paths {
        mv.push(active.iter().map(|&q| g[q] * contribution(i, q)).sum());
    }
    Ok((total, mv.stderr()))
}

/// `||p_{X_{k_n}(T)} - p_{X_{k_ref}(T)}||_{C^beta}` on the query grid for each
/// level, with all levels driven by the reference increments.
pub fn density_rate_study(
    engine: &Engine,
    model: &dyn CoefficientModel,
    params: &DensityStudyParams,
) -> Result<DensityRateStudy> {
    if model.state_dim() != 1 {
        return Err(Error::Unsupported(format!(
            "density studies need a scalar state, got d = {}",
            model.state_dim()
        )));
    }
    let mut levels = params.levels.clone();
    levels.sort_unstable();
    levels.dedup();
    let max_level = *levels
        .last()
        .ok_or_else(|| invalid("levels", "need at least one level"))?;
    if params.reference_level < max_level + 1 {
        return Err(invalid(
            "reference_level",
            format!("{} must exceed the finest level {max_level}", params.reference_level),
        ));
    }
    if params.num_paths < 2 {
        return Err(invalid("num_paths", "need at least two paths"));
    }
    if params.betas.is_empty() || params.betas.iter().any(|b| !(0.0..1.0).contains(b)) {
        return Err(invalid("beta", "need one or more exponents in [0, 1)"));
    }
    let m = model.noise_dim();
    let cap = params.second_variation_cap;
    let ref_steps = steps_of(params.reference_level)?;
    let steps: Vec<usize> = levels.iter().map(|&l| steps_of(l)).collect::<Result<_>>()?;
    let all_feasible = steps.iter().chain([&ref_steps]).all(|&k| ibp_feasible(k, m, cap));
    let mut warnings = Vec::new();
    let method = match params.method {
        MethodChoice::Kernel => DensityMethod::Kernel,
        MethodChoice::Ibp if all_feasible => DensityMethod::Ibp,
        MethodChoice::Ibp => {
            return Err(Error::Infeasible(format!(
                "the IBP estimator needs the second variation on {ref_steps} x {m} cells, above the \
                 second-variation cap of {cap}; use method \"kernel\" or \"auto\""
            )))
        }
        MethodChoice::Auto if all_feasible => DensityMethod::Ibp,
        MethodChoice::Auto => {
            warnings.push(format!(
                "the IBP estimator needs the second variation on {ref_steps} x {m} cells, above the \
                 second-variation cap of {cap}; fell back to the kernel estimator"
            ));
            DensityMethod::Kernel
        }
    };

    let ref_grid = TimeGrid::new(params.horizon, ref_steps)?;
    let ref_solver = Solver::new(model, &ref_grid)?;
    let solvers = steps
        .iter()
        .map(|&k| Solver::new(model, &TimeGrid::new(params.horizon, k)?))
        .collect::<Result<Vec<_>>>()?;
    let x0 = params.x0;
    let use_ibp = method == DensityMethod::Ibp;

    let per_path = |i: u64| -> Result<Sample> {
        let dw = sample_increments(params.seed, i, &ref_grid, m)?;
        let mut f = Vec::with_capacity(steps.len() + 1);
        let mut h = Vec::new();
        let mut degenerate = 0;
        let mut push = |solver: &Solver, dw: &IncrementMatrix| -> Result<()> {
            if use_ibp {
                let (v, w) = unit_weight(solver, dw, x0, cap)?;
                f.push(v);
                degenerate += u64::from(w.is_none());
                h.push(w.unwrap_or(0.0));
            } else {
                f.push(solver.solve(dw, &[x0])?.terminal()[0]);
            }
            Ok(())
        };
        for (&k, solver) in steps.iter().zip(&solvers) {
            push(solver, &coarsen(&dw, ref_steps / k)?)?;
        }
        push(&ref_solver, &dw)?;
        Ok(Sample {
            f,
            h: use_ibp.then_some(h),
            degenerate,
        })
    };
    let samples = engine.map(params.num_paths, per_path)?;
    let degenerate_samples = samples.iter().map(|s| s.degenerate).sum();
    let nl = steps.len();
    let column = |li: usize| samples.iter().map(|s| s.f[li]).collect::<Vec<f64>>();
    let reference = column(nl);
    let query = params.query.resolve(&reference)?;
    let spacing = (query[query.len() - 1] - query[0]) / (query.len() - 1) as f64;
    let bandwidth = match method {
        DensityMethod::Kernel => Some(match params.bandwidth {
            Some(h) if h > 0.0 => h,
            Some(h) => return Err(invalid("bandwidth", format!("must be positive, got {h}"))),
            None => silverman_bandwidth(&reference)?,
        }),
        DensityMethod::Ibp => None,
    };

    // Per-path contribution to p(y_q) at column li.
    let contrib = |i: usize, li: usize, q: usize| -> f64 {
        let s = &samples[i];
        let y = query[q];
        match (&s.h, bandwidth) {
            (Some(h), _) => {
                if s.f[li] > y {
                    h[li]
                } else {
                    0.0
                }
            }
            (None, Some(bw)) => kernel(y - s.f[li], bw),
            (None, None) => unreachable!("kernel estimates carry a bandwidth"),
        }
    };
    let n = samples.len();
    let diff = |li: usize| -> Vec<f64> {
        (0..query.len())
            .map(|q| (0..n).map(|i| contrib(i, li, q) - contrib(i, nl, q)).sum::<f64>() / n as f64)
            .collect()
    };
    let diffs: Vec<Vec<f64>> = (0..nl).map(diff).collect();

    let mut rates = Vec::with_capacity(params.betas.len());
    for &beta in &params.betas {
        let mut rows = Vec::with_capacity(nl);
        for li in 0..nl {
            let (error, stderr) = norm_with_stderr(n, &diffs[li], spacing, beta, |i, q| {
                contrib(i, li, q) - contrib(i, nl, q)
            })?;
            rows.push(RateRow {
                level: levels[li] as usize,
                steps: steps[li],
                error,
                stderr,
            });
        }
        let table = RateTable::new(rows, params.seed);
        let pts: Vec<(f64, f64)> = table
            .rows
            .iter()
            .filter(|r| r.error > EXACT_TOLERANCE)
            .map(|r| (r.level as f64, r.error.log2()))
            .collect();
        let level_fit = if table.exact { None } else { fit_rate(&pts).ok() };
        rates.push(BetaRate {
            beta,
            strictly_decreasing: table.strictly_decreasing(3.0),
            theta_hat: level_fit.map(|f| -f.slope),
            level_fit,
            table,
        });
    }
    let exact = rates.iter().all(|r| r.table.exact);

    let mut estimates = Vec::with_capacity(nl + 1);
    for (li, &k) in steps.iter().chain([&ref_steps]).enumerate() {
        let est = match method {
            DensityMethod::Ibp => {
                let pairs: Vec<(f64, f64)> = samples
                    .iter()
                    .map(|s| (s.f[li], s.h.as_ref().map_or(0.0, |h| h[li])))
                    .collect();
                ibp_density(&pairs, &query)?
            }
            DensityMethod::Kernel => kernel_density(&column(li), &query, bandwidth)?,
        };
        estimates.push((k, est));
    }

    let mut cross_checks = Vec::new();
    let check_paths = params.cross_check_paths.min(params.num_paths);
    if check_paths > 0 {
        let bw = match bandwidth {
            Some(h) => h,
            None => silverman_bandwidth(&reference)?,
        };
        for (li, &k) in steps.iter().chain([&ref_steps]).enumerate() {
            if !ibp_feasible(k, m, cap) {
                continue;
            }
            let pairs = if use_ibp {
                samples[..check_paths as usize]
                    .iter()
                    .map(|s| (s.f[li], s.h.as_ref().map_or(0.0, |h| h[li])))
                    .collect::<Vec<_>>()
            } else {
                let solver = if li < nl { &solvers[li] } else { &ref_solver };
                let factor = ref_steps / k;
                engine.map(check_paths, |i| {
                    let dw = sample_increments(params.seed, i, &ref_grid, m)?;
                    let (v, w) = unit_weight(solver, &coarsen(&dw, factor)?, x0, cap)?;
                    Ok((v, w.unwrap_or(0.0)))
                })?
            };
            let ibp = ibp_density(&pairs, &query)?;
            let ker = kernel_density(&column(li), &query, Some(bw))?;
            let max_z = ibp
                .values
                .iter()
                .zip(&ibp.stderr)
                .zip(ker.values.iter().zip(&ker.stderr))
                .filter(|((_, sa), _)| **sa > 0.0)
                .map(|((a, sa), (b, sb))| (a - b).abs() / (sa * sa + sb * sb).sqrt())
                .fold(0.0, f64::max);
            cross_checks.push(CrossCheck {
                steps: k,
                paths: check_paths,
                max_z,
                agree: max_z <= 3.0,
                ibp,
                kernel: ker,
            });
        }
    }

    Ok(DensityRateStudy {
        method,
        bandwidth,
        query_points: query,
        reference_steps: ref_steps,
        rates,
        estimates,
        cross_checks,
        warnings,
        degenerate_samples,
        exact,
    })
}

/// How the second functional is obtained from the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Perturbation {
    /// `F1 = X_fine(T)`, `F2 = X_n(T)` for each coarse `n` dividing `fine_n`.
    Ladder { fine_n: usize, coarse: Vec<usize> },
    /// `F1 = X_steps(T)`, `F2 = F1 + eps`.
    Shift { steps: usize, shifts: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizedParams {
    pub horizon: f64,
    pub x0: f64,
    pub perturbation: Perturbation,
    pub num_paths: u64,
    pub beta: f64,
    pub query: QuerySpec,
    pub bandwidth: Option<f64>,
    pub cutoff: CutoffSpec,
    pub seed: u64,
}

/// One rung of the perturbation ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LadderRow {
    /// Coarse step count, or 0 for a shift.
    pub steps: usize,
    pub shift: f64,
    /// `(E|F1 - F2|^2)^{1/2}`.
    pub strong_distance: f64,
    /// `||p_{F1,1} - p_{F2,1}||_{C^beta}`.
    pub unweighted_difference: f64,
    pub unweighted_stderr: f64,
    /// `||p_{F1,G} - p_{F2,G}||_{C^beta}` with `G = Psi(R_{F1,F2})`.
    pub localized_difference: f64,
    pub localized_stderr: f64,
    pub unweighted_ratio: f64,
    pub localized_ratio: f64,
    /// Fraction of samples with `Psi(R) < 1`.
    pub activation_fraction: f64,
    pub activation_stderr: f64,
    pub activations: u64,
    pub mean_r: f64,
    pub max_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizedDifference {
    pub rows: Vec<LadderRow>,
    pub query_points: Vec<f64>,
    pub bandwidth: f64,
    /// Ladder only: activation fractions drop by more than 3 joint standard
    /// errors from each rung to the next finer one, over the rungs with
    /// `F2 != F1`.
    pub activations_decreasing: bool,
    /// Rows with `F2 = F1` have `R = 0` on every sample.
    pub r_vanishes_on_diagonal: bool,
    /// Ladder only: the localized ratio never grows by more than 3 joint
    /// standard errors when the coarse step is halved.
    pub ratio_bounded: bool,
}

struct RungSample {
    f2: f64,
    r: f64,
    g: f64,
}

/// Weighted kernel densities of `F1` and `F2` with `G = 1` and with
/// `G = Psi(R_{F1,F2})`, and their `C^beta` distance against `||F1 - F2||_2`.
pub fn localized_density_difference(
    engine: &Engine,
    model: &dyn CoefficientModel,
    params: &LocalizedParams,
) -> Result<LocalizedDifference> {
    if model.state_dim() != 1 {
        return Err(Error::Unsupported("localized densities need a scalar state".into()));
    }
    if params.num_paths < 2 {
        return Err(invalid("num_paths", "need at least two paths"));
    }
    if !(0.0..1.0).contains(&params.beta) {
        return Err(invalid("beta", format!("need 0 <= beta < 1, got {}", params.beta)));
    }
    params.cutoff.validate()?;
    let m = model.noise_dim();
    let x0 = params.x0;
    let (base_steps, rungs): (usize, Vec<(usize, f64)>) = match &params.perturbation {
        Perturbation::Ladder { fine_n, coarse } => {
            if coarse.is_empty() {
                return Err(invalid("coarse", "need at least one coarse level"));
            }
            if let Some(&bad) = coarse.iter().find(|&&n| n == 0 || fine_n % n != 0) {
                return Err(invalid("coarse", format!("{bad} does not divide fine_n = {fine_n}")));
            }
            let mut c = coarse.clone();
            c.sort_unstable();
            c.dedup();
            (*fine_n, c.into_iter().map(|n| (n, 0.0)).collect())
        }
        Perturbation::Shift { steps, shifts } => {
            if shifts.is_empty() || shifts.iter().any(|s| !s.is_finite()) {
                return Err(invalid("shifts", "need one or more finite shifts"));
            }
            (*steps, shifts.iter().map(|&e| (0, e)).collect())
        }
    };
    let grid = TimeGrid::new(params.horizon, base_steps)?;
    let solver = Solver::new(model, &grid)?;
    let coarse_solvers = rungs
        .iter()
        .map(|&(n, _)| if n > 0 { Solver::new(model, &TimeGrid::new(params.horizon, n)?).map(Some) } else { Ok(None) })
        .collect::<Result<Vec<_>>>()?;
    let cutoff_spec = params.cutoff;

    let per_path = |i: u64| -> Result<(f64, Vec<RungSample>)> {
        let dw = sample_increments(params.seed, i, &grid, m)?;
        let f1 = solver.terminal_state(&dw, &[x0], 1, SECOND_VARIATION_CAP)?;
        let v1 = f1.component(0).value();
        let mut out = Vec::with_capacity(rungs.len());
        for (&(n, eps), cs) in rungs.iter().zip(&coarse_solvers) {
            let f2 = match cs {
                Some(cs) => {
                    let factor = base_steps / n;
                    let cdw = coarsen(&dw, factor)?;
                    let f = cs.terminal_state(&cdw, &[x0], 1, SECOND_VARIATION_CAP)?;
                    FunctionalState::new(f.components().iter().map(|c| c.refined(factor)).collect())?
                }
                None => f1.map(|c| c.offset(eps)),
            };
            let r = localization_r(&f1, &f2, &grid)?;
            let g = if r.is_finite() {
                cutoff(&cutoff_spec, Cutoff::Psi, r)?
            } else {
                0.0
            };
            out.push(RungSample {
                f2: f2.component(0).value(),
                r,
                g,
            });
        }
        Ok((v1, out))
    };
    let samples = engine.map(params.num_paths, per_path)?;
    let n = samples.len();
    let f1: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let query = params.query.resolve(&f1)?;
    let spacing = (query[query.len() - 1] - query[0]) / (query.len() - 1) as f64;
    let bw = match params.bandwidth {
        Some(h) if h > 0.0 => h,
        Some(h) => return Err(invalid("bandwidth", format!("must be positive, got {h}"))),
        None => silverman_bandwidth(&f1)?,
    };

    let mut rows = Vec::with_capacity(rungs.len());
    for (ri, &(steps, shift)) in rungs.iter().enumerate() {
        let delta = |i: usize, q: usize, weighted: bool| -> f64 {
            let s = &samples[i];
            let rs = &s.1[ri];
            let g = if weighted { rs.g } else { 1.0 };
            g * (kernel(query[q] - s.0, bw) - kernel(query[q] - rs.f2, bw))
        };
        let mean_of = |weighted: bool| -> Vec<f64> {
            (0..query.len())
                .map(|q| (0..n).map(|i| delta(i, q, weighted)).sum::<f64>() / n as f64)
                .collect()
        };
        let (ud, us) = norm_with_stderr(n, &mean_of(false), spacing, params.beta, |i, q| delta(i, q, false))?;
        let (ld, ls) = norm_with_stderr(n, &mean_of(true), spacing, params.beta, |i, q| delta(i, q, true))?;
        let strong = (samples.iter().map(|s| (s.0 - s.1[ri].f2).powi(2)).sum::<f64>() / n as f64).sqrt();
        let activations = samples.iter().filter(|s| s.1[ri].g < 1.0).count() as u64;
        let frac = activations as f64 / n as f64;
        let (mut sum_r, mut max_r) = (0.0, 0.0_f64);
        for s in &samples {
            sum_r += s.1[ri].r;
            max_r = max_r.max(s.1[ri].r);
        }
        let ratio = |d: f64| if strong > 0.0 { d / strong } else { 0.0 };
        rows.push(LadderRow {
            steps,
            shift,
            strong_distance: strong,
            unweighted_difference: ud,
            unweighted_stderr: us,
            localized_difference: ld,
            localized_stderr: ls,
            unweighted_ratio: ratio(ud),
            localized_ratio: ratio(ld),
            activation_fraction: frac,
            activation_stderr: (frac * (1.0 - frac) / (n - 1) as f64).sqrt(),
            activations,
            mean_r: sum_r / n as f64,
            max_r,
        });
    }

    let is_ladder = matches!(params.perturbation, Perturbation::Ladder { .. });
    let diagonal = |r: &LadderRow| (is_ladder && r.steps == base_steps) || (!is_ladder && r.shift == 0.0);
    let r_vanishes_on_diagonal = rows.iter().filter(|r| diagonal(r)).all(|r| r.max_r == 0.0);
    let off: Vec<&LadderRow> = rows.iter().filter(|r| !diagonal(r)).collect();
    let joint = |a: f64, b: f64| (a * a + b * b).sqrt();
    let activations_decreasing = is_ladder
        && off.windows(2).all(|w| {
            w[0].activation_fraction - w[1].activation_fraction
                > 3.0 * joint(w[0].activation_stderr, w[1].activation_stderr)
        });
    let ratio_bounded = is_ladder
        && off.windows(2).all(|w| {
            let se = |r: &LadderRow| if r.strong_distance > 0.0 { r.localized_stderr / r.strong_distance } else { 0.0 };
            w[1].localized_ratio - w[0].localized_ratio <= 3.0 * joint(se(w[0]), se(w[1]))
        });
    Ok(LocalizedDifference {
        rows,
        query_points: query,
        bandwidth: bw,
        activations_decreasing,
        r_vanishes_on_diagonal,
        ratio_bounded,
    })
}
