//! Strong-error and derivative-error studies against a fine-grid reference
//! driven by the same increments.

use serde::Serialize;

use super::{Solver, Trajectory, VariationTensor};
use crate::error::{invalid, Result};
use crate::harness::engine::{Engine, MeanVar};
use crate::harness::rate::{fit_rate, RateFit, RateRow, RateTable};
use crate::models::{CoefficientModel, DiscretePath};
use crate::wiener::{coarsen, sample_increments, IncrementMatrix, TimeGrid};

/// Inputs shared by the convergence studies.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyParams {
    pub horizon: f64,
    pub x0: Vec<f64>,
    /// Coarse step counts; each must divide `fine_n`.
    pub coarse: Vec<usize>,
    pub fine_n: usize,
    pub num_paths: u64,
    /// Moment of the sup-norm error, `p >= 1`.
    pub p: f64,
    pub seed: u64,
}

impl StudyParams {
    fn validate(&self, model: &dyn CoefficientModel) -> Result<()> {
        if self.coarse.is_empty() {
            return Err(invalid("coarse", "need at least one coarse level"));
        }
        let max = *self.coarse.iter().max().unwrap_or(&0);
        if let Some(&bad) = self
            .coarse
            .iter()
            .find(|&&n| n == 0 || self.fine_n % n != 0)
        {
            return Err(invalid(
                "coarse",
                format!("{bad} does not divide fine_n = {}", self.fine_n),
            ));
        }
        if self.fine_n < 8 * max {
            return Err(invalid(
                "fine_n",
                format!("{} is below 8 x the finest coarse level {max}", self.fine_n),
            ));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(invalid("p", format!("need p >= 1, got {}", self.p)));
        }
        if self.num_paths < 2 {
            return Err(invalid("num_paths", "need at least two paths"));
        }
        if self.x0.len() != model.state_dim() {
            return Err(invalid(
                "x0",
                format!("{} components for a {}-dimensional model", self.x0.len(), model.state_dim()),
            ));
        }
        Ok(())
    }

    fn sorted_levels(&self) -> Vec<usize> {
        let mut v = self.coarse.clone();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Per-level statistics of `X_n(s) - X_n(eta_n(s))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IncrementRow {
    pub steps: usize,
    /// `max_k E[sup_{s in cell k} |X_n(s) - X_n(t_k)|^2]`.
    pub max_cell_mean: f64,
    pub max_cell_stderr: f64,
    /// `E[max_k sup_{s in cell k} |X_n(s) - X_n(t_k)|^2]`.
    pub mean_of_max: f64,
    pub mean_of_max_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncrementBound {
    pub rows: Vec<IncrementRow>,
    /// Fit of `log2 max_cell_mean` against `log2 n`.
    pub fit: Option<RateFit>,
    /// Fit of `log2 mean_of_max` against `log2 n`.
    pub fit_mean_of_max: Option<RateFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrongStudy {
    pub table: RateTable,
    pub increments: IncrementBound,
    /// `E[max_k |X_n(t_k)|^4]` for each level, in level order.
    pub fourth_moments: Vec<f64>,
    pub max_fourth_moment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeStudy {
    /// Sum of the strong and derivative terms.
    pub table: RateTable,
    pub strong: RateTable,
    pub derivative: RateTable,
}

/// `(sup error, per-cell sup squared increment)` of the coarse scheme
/// interpolated at the fine nodes.
fn compare_on_fine_nodes(
    coarse: &Trajectory,
    fine_dw: &IncrementMatrix,
    fine: &DiscretePath,
    factor: usize,
) -> (f64, Vec<f64>) {
    let n = coarse.path.grid().steps();
    let d = coarse.path.dim();
    let m = fine_dw.noise_dim();
    let dtf = fine_dw.grid().dt();
    let mut sup_err: f64 = 0.0;
    let mut cells = vec![0.0; n];
    let mut w = vec![0.0; m];
    let mut x = vec![0.0; d];
    for (k, cell) in cells.iter_mut().enumerate() {
        let base = coarse.path.node(k);
        let s = coarse.sigma_at(k);
        let b = coarse.drift_at(k);
        w.fill(0.0);
        for q in 1..=factor {
            for (wj, inc) in w.iter_mut().zip(fine_dw.row(k * factor + q - 1)) {
                *wj += inc;
            }
            let h = q as f64 * dtf;
            for i in 0..d {
                x[i] = base[i] + b[i] * h + (0..m).map(|j| s[i * m + j] * w[j]).sum::<f64>();
            }
            let f = fine.node(k * factor + q);
            let err = x.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            sup_err = sup_err.max(err);
            let inc2 = x.iter().zip(base).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            *cell = f64::max(*cell, inc2);
        }
    }
    (sup_err, cells)
}

fn fourth_power_sup(path: &DiscretePath) -> f64 {
    path.sup_norm().powi(4)
}

/// `(E[Y^p])^{1/p}` and its delta-method standard error.
fn lp_norm(acc: &MeanVar, p: f64) -> (f64, f64) {
    let mean = acc.mean().max(0.0);
    if mean == 0.0 {
        return (0.0, 0.0);
    }
    let value = mean.powf(1.0 / p);
    (value, acc.stderr() * value / (p * mean))
}

struct StrongSample {
    err_p: Vec<f64>,
    cells: Vec<Vec<f64>>,
    sup4: Vec<f64>,
}

/// Strong `L^p` sup-norm error of the Euler scheme at each coarse level
/// against the scheme on `fine_n` steps, with common random numbers.
pub fn strong_error_study(
    engine: &Engine,
    model: &dyn CoefficientModel,
    params: &StudyParams,
) -> Result<StrongStudy> {
    params.validate(model)?;
    let levels = params.sorted_levels();
    let fine_grid = TimeGrid::new(params.horizon, params.fine_n)?;
    let fine_solver = Solver::new(model, &fine_grid)?;
    let solvers = levels
        .iter()
        .map(|&n| Solver::new(model, &TimeGrid::new(params.horizon, n)?))
        .collect::<Result<Vec<_>>>()?;
    let m = model.noise_dim();
    let p = params.p;

    let per_path = |i: u64| -> Result<StrongSample> {
        let dw = sample_increments(params.seed, i, &fine_grid, m)?;
        let fine = fine_solver.solve(&dw, &params.x0)?;
        let mut out = StrongSample {
            err_p: Vec::with_capacity(levels.len()),
            cells: Vec::with_capacity(levels.len()),
            sup4: Vec::with_capacity(levels.len()),
        };
        for (&n, solver) in levels.iter().zip(&solvers) {
            let factor = params.fine_n / n;
            let cdw = coarsen(&dw, factor)?;
            let traj = solver.trajectory(&cdw, &params.x0)?;
            let (err, cells) = compare_on_fine_nodes(&traj, &dw, &fine, factor);
            out.err_p.push(err.powf(p));
            out.cells.push(cells);
            out.sup4.push(fourth_power_sup(&traj.path));
        }
        Ok(out)
    };

    struct Acc {
        err: Vec<MeanVar>,
        cells: Vec<Vec<MeanVar>>,
        max_cell: Vec<MeanVar>,
        sup4: Vec<MeanVar>,
    }
    let init = Acc {
        err: vec![MeanVar::new(); levels.len()],
        cells: levels.iter().map(|&n| vec![MeanVar::new(); n]).collect(),
        max_cell: vec![MeanVar::new(); levels.len()],
        sup4: vec![MeanVar::new(); levels.len()],
    };
    let acc = engine.map_reduce(params.num_paths, per_path, init, |mut acc, s| {
        for (li, e) in s.err_p.iter().enumerate() {
            acc.err[li].push(*e);
            acc.sup4[li].push(s.sup4[li]);
            let cells = &s.cells[li];
            for (c, v) in acc.cells[li].iter_mut().zip(cells) {
                c.push(*v);
            }
            acc.max_cell[li].push(cells.iter().copied().fold(0.0, f64::max));
        }
        acc
    })?;

    let rows = levels
        .iter()
        .enumerate()
        .map(|(li, &n)| {
            let (error, stderr) = lp_norm(&acc.err[li], p);
            RateRow {
                level: li,
                steps: n,
                error,
                stderr,
            }
        })
        .collect();
    let table = RateTable::new(rows, params.seed);

    let inc_rows: Vec<IncrementRow> = levels
        .iter()
        .enumerate()
        .map(|(li, &n)| {
            let worst = acc.cells[li]
                .iter()
                .max_by(|a, b| a.mean().total_cmp(&b.mean()))
                .copied()
                .unwrap_or_default();
            IncrementRow {
                steps: n,
                max_cell_mean: worst.mean(),
                max_cell_stderr: worst.stderr(),
                mean_of_max: acc.max_cell[li].mean(),
                mean_of_max_stderr: acc.max_cell[li].stderr(),
            }
        })
        .collect();
    let fit_of = |f: fn(&IncrementRow) -> f64| {
        let pts: Vec<_> = inc_rows
            .iter()
            .filter(|r| f(r) > 0.0)
            .map(|r| ((r.steps as f64).log2(), f(r).log2()))
            .collect();
        fit_rate(&pts).ok()
    };
    let increments = IncrementBound {
        fit: fit_of(|r| r.max_cell_mean),
        fit_mean_of_max: fit_of(|r| r.mean_of_max),
        rows: inc_rows,
    };
    let fourth_moments: Vec<f64> = acc.sup4.iter().map(MeanVar::mean).collect();
    let max_fourth_moment = fourth_moments.iter().copied().fold(0.0, f64::max);
    Ok(StrongStudy {
        table,
        increments,
        fourth_moments,
        max_fourth_moment,
    })
}

/// `sup_l |D X_n(t_l) - avg D X_fine(t_l)|_H` over coarse nodes, with the
/// fine field averaged onto coarse cells.
fn derivative_distance(coarse: &VariationTensor, fine: &VariationTensor, factor: usize, dt: f64) -> f64 {
    let (n, m, d) = (coarse.steps(), coarse.noise_dim(), coarse.dim());
    let mut sup: f64 = 0.0;
    for l in 1..=n {
        let fine_row = fine.row(l * factor);
        let coarse_row = coarse.row(l);
        let mut acc = 0.0;
        for k in 0..l {
            for j in 0..m {
                for i in 0..d {
                    let avg = (0..factor)
                        .map(|q| fine_row[((k * factor + q) * m + j) * d + i])
                        .sum::<f64>()
                        / factor as f64;
                    acc += (coarse_row[(k * m + j) * d + i] - avg).powi(2);
                }
            }
        }
        sup = sup.max((acc * dt).sqrt());
    }
    sup
}

/// Error in the norm `(E sup|X_n - X|^p)^{1/p} + (E sup|D X_n - D X|_H^p)^{1/p}`.
pub fn derivative_error_study(
    engine: &Engine,
    model: &dyn CoefficientModel,
    params: &StudyParams,
) -> Result<DerivativeStudy> {
    params.validate(model)?;
    let levels = params.sorted_levels();
    let fine_grid = TimeGrid::new(params.horizon, params.fine_n)?;
    let fine_solver = Solver::new(model, &fine_grid)?;
    let solvers = levels
        .iter()
        .map(|&n| Solver::new(model, &TimeGrid::new(params.horizon, n)?))
        .collect::<Result<Vec<_>>>()?;
    let m = model.noise_dim();
    let p = params.p;

    let per_path = |i: u64| -> Result<Vec<(f64, f64)>> {
        let dw = sample_increments(params.seed, i, &fine_grid, m)?;
        let fine = fine_solver.trajectory(&dw, &params.x0)?;
        let fine_var = fine_solver.first_variation(&dw, &fine)?;
        levels
            .iter()
            .zip(&solvers)
            .map(|(&n, solver)| {
                let factor = params.fine_n / n;
                let cdw = coarsen(&dw, factor)?;
                let traj = solver.trajectory(&cdw, &params.x0)?;
                let var = solver.first_variation(&cdw, &traj)?;
                let (err, _) = compare_on_fine_nodes(&traj, &dw, &fine.path, factor);
                let dist = derivative_distance(&var, &fine_var, factor, solver.grid().dt());
                Ok((err.powf(p), dist.powf(p)))
            })
            .collect()
    };
    let init = vec![(MeanVar::new(), MeanVar::new()); levels.len()];
    let acc = engine.map_reduce(params.num_paths, per_path, init, |mut acc, s| {
        for (a, (e, dd)) in acc.iter_mut().zip(s) {
            a.0.push(e);
            a.1.push(dd);
        }
        acc
    })?;
    let mut strong = Vec::new();
    let mut deriv = Vec::new();
    let mut total = Vec::new();
    for (li, &n) in levels.iter().enumerate() {
        let (e0, s0) = lp_norm(&acc[li].0, p);
        let (e1, s1) = lp_norm(&acc[li].1, p);
        let row = |error, stderr| RateRow {
            level: li,
            steps: n,
            error,
            stderr,
        };
        strong.push(row(e0, s0));
        deriv.push(row(e1, s1));
        total.push(row(e0 + e1, (s0 * s0 + s1 * s1).sqrt()));
    }
    Ok(DerivativeStudy {
        table: RateTable::new(total, params.seed),
        strong: RateTable::new(strong, params.seed),
        derivative: RateTable::new(deriv, params.seed),
    })
}
