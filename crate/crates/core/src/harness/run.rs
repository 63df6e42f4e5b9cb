//! Dispatch from a config to the corresponding study and its report bundle.

use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use super::config::{ExperimentConfig, ExperimentKind};
use super::engine::{Engine, MeanVar};
use super::report::{
    csv_bytes, density_csv, rate_csv, CheckResult, Counters, RateSidecar, ReportBundle, Summary, VERSION,
};
use crate::density::{
    density_rate_study, ibp_density, kernel_density, localized_density_difference, normal_pdf, unit_weight,
    DensityEstimate, DensityStudyParams, LocalizedParams, QuerySpec,
};
use crate::error::{Error, Result};
use crate::euler::{derivative_error_study, strong_error_study, Solver, StudyParams};
use crate::models::{check_ellipticity, BuiltinModel, CoefficientModel};
use crate::weights::covariance;
use crate::wiener::{sample_increments, TimeGrid};

/// Output directory used when neither the command line nor the config names one.
pub const DEFAULT_OUTPUT_DIR: &str = "pdm-out";

/// Overrides from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl RunOptions {
    pub fn workers(&self, config: &ExperimentConfig) -> usize {
        self.workers.or(config.workers).unwrap_or(1)
    }

    pub fn output_dir(&self, config: &ExperimentConfig) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| config.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }
}

/// Study-specific part of a bundle.
struct Outcome {
    csv: Vec<(String, Vec<u8>)>,
    json: Vec<(String, serde_json::Value)>,
    checks: Vec<CheckResult>,
    counters: Counters,
    exact: bool,
    warnings: Vec<String>,
    results: serde_json::Value,
}

impl Outcome {
    fn new(results: serde_json::Value) -> Self {
        Self {
            csv: Vec::new(),
            json: Vec::new(),
            checks: Vec::new(),
            counters: Counters::default(),
            exact: false,
            warnings: Vec::new(),
            results,
        }
    }
}

/// Runs the configured study and assembles its reports.
pub fn run_experiment(config: &ExperimentConfig, options: &RunOptions) -> Result<ReportBundle> {
    let start = Instant::now();
    let workers = options.workers(config);
    let engine = Engine::new(workers)?;
    let model = config.model.build()?;
    if config.x0.len() != model.state_dim() {
        return Err(Error::Config(format!(
            "x0 has {} components for a {}-dimensional model",
            config.x0.len(),
            model.state_dim()
        )));
    }
    if config.num_paths < 2 {
        return Err(Error::Config("num_paths must be at least 2".into()));
    }
    let hash = config.hash();
    let out = match config.experiment {
        ExperimentKind::StrongRate => strong_rate(&engine, &model, config, &hash)?,
        ExperimentKind::DerivativeRate => derivative_rate(&engine, &model, config, &hash)?,
        ExperimentKind::IbpCheck => ibp_check(&engine, &model, config)?,
        ExperimentKind::DensityRate => density_rate(&engine, &model, config, &hash)?,
        ExperimentKind::HolderNorm => holder(&engine, &model, config)?,
        ExperimentKind::EllipticityCheck => ellipticity(&engine, &model, config)?,
    };
    let mut files: Vec<String> = out.csv.iter().map(|c| c.0.clone()).collect();
    files.extend(out.json.iter().map(|j| j.0.clone()));
    files.push("summary.json".into());
    let summary = Summary {
        experiment: config.experiment.to_string(),
        version: VERSION.to_string(),
        config_hash: hash,
        seed: config.seed,
        workers,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        counters: out.counters,
        exact: out.exact,
        warnings: out.warnings,
        passed: out.checks.iter().all(|c| c.passed),
        checks: out.checks,
        files,
        results: out.results,
    };
    Ok(ReportBundle {
        csv: out.csv,
        json: out.json,
        summary,
    })
}

fn study_params(config: &ExperimentConfig) -> Result<StudyParams> {
    Ok(StudyParams {
        horizon: config.horizon,
        x0: config.x0.clone(),
        coarse: config.levels_usize()?,
        fine_n: config.fine_n()?,
        num_paths: config.num_paths,
        p: config.p,
        seed: config.seed,
    })
}

fn sidecar(table: &crate::harness::RateTable, hash: &str) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(RateSidecar::new(table, hash))?)
}

fn slope_checks(
    checks: &mut Vec<CheckResult>,
    table: &crate::harness::RateTable,
    range: [f64; 2],
    min_r2: Option<f64>,
) {
    if table.exact {
        checks.push(CheckResult::flag("exact", true));
        return;
    }
    match table.fit {
        Some(f) => {
            checks.push(CheckResult::in_range("slope", f.slope, range));
            if let Some(r2) = min_r2 {
                checks.push(CheckResult::at_least("r_squared", f.r_squared, r2));
            }
        }
        None => checks.push(CheckResult::new("slope", f64::NAN, "a fitted slope", false)),
    }
}

fn strong_rate(engine: &Engine, model: &BuiltinModel, config: &ExperimentConfig, hash: &str) -> Result<Outcome> {
    let study = strong_error_study(engine, model, &study_params(config)?)?;
    let mut out = Outcome::new(json!({
        "fit": study.table.fit,
        "increments": study.increments,
        "fourth_moments": study.fourth_moments,
        "max_fourth_moment": study.max_fourth_moment,
    }));
    out.exact = study.table.exact;
    out.csv.push(("rates.csv".into(), rate_csv(&study.table)?));
    out.json.push(("rates.json".into(), sidecar(&study.table, hash)?));
    out.csv.push(("increments.csv".into(), csv_bytes(&study.increments.rows)?));
    let t = &config.check;
    slope_checks(
        &mut out.checks,
        &study.table,
        t.slope_range.unwrap_or([-0.65, -0.35]),
        Some(t.min_r_squared.unwrap_or(0.97)),
    );
    if !study.table.exact {
        let range = t.increment_slope_range.unwrap_or([-1.3, -0.7]);
        match study.increments.fit_mean_of_max {
            Some(f) => out.checks.push(CheckResult::in_range("increment_slope", f.slope, range)),
            None => out
                .checks
                .push(CheckResult::new("increment_slope", f64::NAN, "a fitted slope", false)),
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct ComponentRow {
    steps: usize,
    strong_error: f64,
    strong_stderr: f64,
    derivative_error: f64,
    derivative_stderr: f64,
}

fn derivative_rate(engine: &Engine, model: &BuiltinModel, config: &ExperimentConfig, hash: &str) -> Result<Outcome> {
    let study = derivative_error_study(engine, model, &study_params(config)?)?;
    let mut out = Outcome::new(json!({
        "fit": study.table.fit,
        "strong_fit": study.strong.fit,
        "derivative_fit": study.derivative.fit,
    }));
    out.exact = study.table.exact;
    out.csv.push(("rates.csv".into(), rate_csv(&study.table)?));
    out.json.push(("rates.json".into(), sidecar(&study.table, hash)?));
    let rows: Vec<ComponentRow> = study
        .strong
        .rows
        .iter()
        .zip(&study.derivative.rows)
        .map(|(s, d)| ComponentRow {
            steps: s.steps,
            strong_error: s.error,
            strong_stderr: s.stderr,
            derivative_error: d.error,
            derivative_stderr: d.stderr,
        })
        .collect();
    out.csv.push(("components.csv".into(), csv_bytes(&rows)?));
    slope_checks(
        &mut out.checks,
        &study.table,
        config.check.slope_range.unwrap_or([-0.7, -0.3]),
        config.check.min_r_squared,
    );
    Ok(out)
}

/// Mean and standard deviation of `X(T)` for constant coefficients.
fn gaussian_law(model: &BuiltinModel, x0: f64, horizon: f64) -> Option<(f64, f64)> {
    match model {
        BuiltinModel::Constant { d: 1, sigma, drift, .. } => {
            let var: f64 = sigma.iter().map(|s| s * s).sum::<f64>() * horizon;
            Some((x0 + drift[0] * horizon, var.sqrt()))
        }
        _ => None,
    }
}

#[derive(Serialize)]
struct ComparisonRow {
    y: f64,
    p_hat: f64,
    stderr: f64,
    reference: f64,
    reference_stderr: f64,
    z: f64,
}

fn comparison_row(y: f64, est: &DensityEstimate, q: usize, reference: f64, reference_stderr: f64) -> ComparisonRow {
    let s = (est.stderr[q].powi(2) + reference_stderr.powi(2)).sqrt();
    let diff = est.values[q] - reference;
    ComparisonRow {
        y,
        p_hat: est.values[q],
        stderr: est.stderr[q],
        reference,
        reference_stderr,
        z: if s > 0.0 {
            diff / s
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        },
    }
}

fn ibp_check(engine: &Engine, model: &BuiltinModel, config: &ExperimentConfig) -> Result<Outcome> {
    let x0 = config.scalar_x0()?;
    let steps = config.steps()?;
    let cap = config.second_variation_cap;
    let m = model.noise_dim();
    if steps * m > cap {
        return Err(Error::Infeasible(format!(
            "IBP weights on {steps} x {m} cells exceed the second-variation cap of {cap}"
        )));
    }
    let grid = TimeGrid::new(config.horizon, steps)?;
    let solver = Solver::new(model, &grid)?;
    let sample = |i: u64| -> Result<(f64, Option<f64>)> {
        let dw = sample_increments(config.seed, i, &grid, m)?;
        unit_weight(&solver, &dw, x0, cap)
    };
    let raw = engine.map(config.num_paths, sample)?;
    let degenerate = raw.iter().filter(|s| s.1.is_none()).count() as u64;
    let pairs: Vec<(f64, f64)> = raw.iter().map(|&(f, h)| (f, h.unwrap_or(0.0))).collect();
    let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let law = gaussian_law(model, x0, config.horizon);
    let query = match (law, config.query.range) {
        (Some((mean, sd)), None) => QuerySpec {
            range: Some([mean - config.query.width_sd * sd, mean + config.query.width_sd * sd]),
            ..config.query
        }
        .resolve(&values)?,
        _ => config.query.resolve(&values)?,
    };
    let est = ibp_density(&pairs, &query)?;
    let (reference, reference_stderr, reference_kind) = match law {
        Some((mean, sd)) => (
            query.iter().map(|&y| normal_pdf(y, mean, sd)).collect(),
            vec![0.0; query.len()],
            "gaussian",
        ),
        None => {
            let k = kernel_density(&values, &query, config.bandwidth)?;
            (k.values, k.stderr, "kernel")
        }
    };
    let rows: Vec<ComparisonRow> = (0..query.len())
        .map(|q| comparison_row(query[q], &est, q, reference[q], reference_stderr[q]))
        .collect();
    // Beyond the largest sample the estimate is identically zero with zero
    // standard error; such points carry no information.
    let max_z = rows
        .iter()
        .filter(|r| r.stderr > 0.0)
        .map(|r| r.z.abs())
        .fold(0.0, f64::max);
    let mut out = Outcome::new(serde_json::Value::Null);
    out.counters.degenerate_samples = degenerate;
    out.csv.push(("density.csv".into(), density_csv(&est)?));
    out.csv.push(("comparison.csv".into(), csv_bytes(&rows)?));
    out.checks
        .push(CheckResult::at_most("max_z", max_z, config.check.max_z.unwrap_or(3.0)));
    let mut center = serde_json::Value::Null;
    if let (Some(n), Some((mean, sd))) = (config.center_paths, law) {
        let acc = engine.map_reduce(
            n,
            |i| {
                let (f, h) = sample(i)?;
                Ok(if f > mean { h.unwrap_or(0.0) } else { 0.0 })
            },
            MeanVar::new(),
            |mut a, v| {
                a.push(v);
                a
            },
        )?;
        let exact = normal_pdf(mean, mean, sd);
        let rel = (acc.mean() - exact).abs() / exact;
        center = json!({
            "y": mean, "paths": n, "p_hat": acc.mean(), "stderr": acc.stderr(),
            "exact": exact, "relative_error": rel,
        });
        out.checks.push(CheckResult::at_most(
            "center_relative_error",
            rel,
            config.check.center_rel_tol.unwrap_or(0.01),
        ));
    }
    out.results = json!({
        "reference": reference_kind,
        "max_z": max_z,
        "mass": est.mass(),
        "center": center,
    });
    Ok(out)
}

fn beta_tag(beta: f64) -> String {
    format!("{beta}").replace('.', "_")
}

fn density_rate(engine: &Engine, model: &BuiltinModel, config: &ExperimentConfig, hash: &str) -> Result<Outcome> {
    let levels = config
        .levels
        .iter()
        .map(|&l| u32::try_from(l).map_err(|_| Error::Config(format!("level {l} is too large"))))
        .collect::<Result<Vec<_>>>()?;
    if levels.is_empty() {
        return Err(Error::Config("density-rate needs \"levels\"".into()));
    }
    let reference_level = config
        .reference_level
        .ok_or_else(|| Error::Config("density-rate needs \"reference_level\"".into()))?;
    let params = DensityStudyParams {
        horizon: config.horizon,
        x0: config.scalar_x0()?,
        levels,
        reference_level,
        num_paths: config.num_paths,
        betas: config.betas.clone(),
        query: config.query,
        bandwidth: config.bandwidth,
        method: config.method,
        cross_check_paths: config.cross_check_paths,
        second_variation_cap: config.second_variation_cap,
        seed: config.seed,
    };
    let study = density_rate_study(engine, model, &params)?;
    let mut out = Outcome::new(json!({
        "method": study.method,
        "bandwidth": study.bandwidth,
        "reference_steps": study.reference_steps,
        "rates": study.rates.iter().map(|r| json!({
            "beta": r.beta, "theta_hat": r.theta_hat, "level_fit": r.level_fit,
            "fit": r.table.fit, "strictly_decreasing": r.strictly_decreasing,
        })).collect::<Vec<_>>(),
        "cross_checks": study.cross_checks,
    }));
    out.exact = study.exact;
    out.warnings = study.warnings.clone();
    out.counters.degenerate_samples = study.degenerate_samples;
    let min_theta = config.check.min_theta.unwrap_or(0.3);
    for r in &study.rates {
        let tag = beta_tag(r.beta);
        out.csv.push((format!("rates_beta_{tag}.csv"), rate_csv(&r.table)?));
        let mut side = sidecar(&r.table, hash)?;
        side["beta"] = json!(r.beta);
        side["theta_hat"] = json!(r.theta_hat);
        out.json.push((format!("rates_beta_{tag}.json"), side));
        if r.table.exact {
            out.checks.push(CheckResult::flag(&format!("exact_beta_{tag}"), true));
            continue;
        }
        out.checks.push(CheckResult::flag(
            &format!("strictly_decreasing_beta_{tag}"),
            r.strictly_decreasing,
        ));
        out.checks.push(CheckResult::at_least(
            &format!("theta_hat_beta_{tag}"),
            r.theta_hat.unwrap_or(f64::NAN),
            min_theta,
        ));
    }
    for c in &study.cross_checks {
        let rows: Vec<ComparisonRow> = (0..c.ibp.query_points.len())
            .map(|q| comparison_row(c.ibp.query_points[q], &c.ibp, q, c.kernel.values[q], c.kernel.stderr[q]))
            .collect();
        out.csv.push((format!("cross_check_steps_{}.csv", c.steps), csv_bytes(&rows)?));
    }
    for (k, est) in &study.estimates {
        out.csv.push((format!("density_steps_{k}.csv"), density_csv(est)?));
    }
    Ok(out)
}

fn holder(engine: &Engine, model: &BuiltinModel, config: &ExperimentConfig) -> Result<Outcome> {
    let beta = match config.betas.as_slice() {
        [b] => *b,
        _ => return Err(Error::Config("holder-norm takes exactly one entry in \"betas\"".into())),
    };
    let params = LocalizedParams {
        horizon: config.horizon,
        x0: config.scalar_x0()?,
        perturbation: config.perturbation()?,
        num_paths: config.num_paths,
        beta,
        query: config.query,
        bandwidth: config.bandwidth,
        cutoff: config.cutoff,
        seed: config.seed,
    };
    let res = localized_density_difference(engine, model, &params)?;
    let mut out = Outcome::new(json!({
        "bandwidth": res.bandwidth,
        "activations_decreasing": res.activations_decreasing,
        "r_vanishes_on_diagonal": res.r_vanishes_on_diagonal,
        "ratio_bounded": res.ratio_bounded,
    }));
    out.counters.localization_activations = res.rows.iter().map(|r| r.activations).sum();
    out.csv.push(("ladder.csv".into(), csv_bytes(&res.rows)?));
    out.checks
        .push(CheckResult::flag("r_vanishes_on_diagonal", res.r_vanishes_on_diagonal));
    if config.shifts.is_none() {
        out.checks
            .push(CheckResult::flag("activations_decreasing", res.activations_decreasing));
        out.checks.push(CheckResult::flag("ratio_bounded", res.ratio_bounded));
    }
    Ok(out)
}

#[derive(Serialize)]
struct QuantileRow {
    quantile: f64,
    det: f64,
}

fn ellipticity(engine: &Engine, model: &BuiltinModel, config: &ExperimentConfig) -> Result<Outcome> {
    let steps = config.steps()?;
    let grid = TimeGrid::new(config.horizon, steps)?;
    let solver = Solver::new(model, &grid)?;
    let m = model.noise_dim();
    let per_path = |i: u64| -> Result<(f64, bool, f64)> {
        let dw = sample_increments(config.seed, i, &grid, m)?;
        let path = solver.solve(&dw, &config.x0)?;
        let eig = check_ellipticity(model, std::slice::from_ref(&path))?.min_eigenvalue;
        let f = solver.terminal_state(&dw, &config.x0, 1, config.second_variation_cap)?;
        let cov = covariance(&f, &grid)?;
        Ok((cov.det, cov.degenerate, eig))
    };
    let samples = engine.map(config.num_paths, per_path)?;
    let mut dets: Vec<f64> = samples.iter().map(|s| s.0).collect();
    dets.sort_by(f64::total_cmp);
    let degenerate = samples.iter().filter(|s| s.1).count() as u64;
    let min_eig = samples.iter().map(|s| s.2).fold(f64::INFINITY, f64::min);
    let c = model.ellipticity_floor();
    let d = model.state_dim() as i32;
    let factor = config.check.det_factor.unwrap_or(0.1);
    let bound = factor * (c * config.horizon).powi(d);
    let quantiles = [0.0, 0.001, 0.01, 0.1, 0.5, 0.9, 1.0];
    let rows: Vec<QuantileRow> = quantiles
        .iter()
        .map(|&q| QuantileRow {
            quantile: q,
            det: dets[((dets.len() - 1) as f64 * q).round() as usize],
        })
        .collect();
    let mut out = Outcome::new(json!({
        "min_det": dets[0],
        "det_bound": bound,
        "min_eigenvalue": min_eig,
        "declared_floor": c,
    }));
    out.counters.degenerate_samples = degenerate;
    out.csv.push(("determinants.csv".into(), csv_bytes(&rows)?));
    out.checks.push(CheckResult::new(
        "min_det",
        dets[0],
        format!("> {bound}"),
        dets[0] > bound,
    ));
    out.checks
        .push(CheckResult::at_most("degenerate_samples", degenerate as f64, 0.0));
    // sigma sigma^* is formed in floating point; allow for rounding at the floor.
    out.checks.push(CheckResult::new(
        "min_eigenvalue",
        min_eig,
        format!(">= {c}"),
        min_eig >= c * (1.0 - 1e-9),
    ));
    Ok(out)
}
