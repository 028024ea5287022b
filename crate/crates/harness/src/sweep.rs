//! Strategy x solver x noise sweeps and their CSV reports.

use std::fs;
use std::path::Path;
use std::time::Instant;

use handeye_core::metrics::ErrorReport;
use handeye_core::trajectory::build_motion_pairs;
use handeye_core::{DnloParams, SelectionStrategy, SolverKind};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::dataset::{generate_scenarios, Scenario};
use crate::error::HarnessError;
use crate::stats::{summarize, Summary};

pub const RUNS_FILE: &str = "runs.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const CONFIG_FILE: &str = "config.json";

/// Result of one solver on one strategy of one dataset cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub trajectory: usize,
    pub noise: String,
    pub noise_index: usize,
    pub seed: u64,
    pub gaussian_sigma2: f64,
    pub outlier_fraction: f64,
    pub drift_rate: f64,
    pub strategy: SelectionStrategy,
    pub solver: SolverKind,
    pub pairs: usize,
    /// `None` when no estimate was produced.
    pub errors: Option<ErrorReport>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub failure: Option<String>,
    pub wall_ms: f64,
}

/// Runs every strategy and solver on one cell.
pub fn run_scenario(
    scenario: &Scenario,
    strategies: &[SelectionStrategy],
    solvers: &[SolverKind],
    dnlo: &DnloParams,
) -> Vec<RunRecord> {
    let mut out = Vec::with_capacity(strategies.len() * solvers.len());
    for &strategy in strategies {
        let mps = build_motion_pairs(&scenario.sensor1, &scenario.sensor2, strategy);
        for &solver in solvers {
            let mut rec = RunRecord {
                trajectory: scenario.trajectory,
                noise: scenario.noise_label.clone(),
                noise_index: scenario.noise_index,
                seed: scenario.spec.seed,
                gaussian_sigma2: scenario.spec.gaussian_sigma2,
                outlier_fraction: scenario.spec.outlier_fraction,
                drift_rate: scenario.spec.drift_rate,
                strategy,
                solver,
                pairs: 0,
                errors: None,
                cost: f64::NAN,
                iterations: 0,
                converged: false,
                failure: None,
                wall_ms: 0.0,
            };
            match &mps {
                Err(e) => rec.failure = Some(e.to_string()),
                Ok(mps) => {
                    rec.pairs = mps.len();
                    let start = Instant::now();
                    let result = solver.solve(mps, dnlo);
                    rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
                    match result {
                        Ok(r) => {
                            rec.errors = Some(ErrorReport::compute(&r.extrinsic, mps, &scenario.x_gt));
                            rec.cost = r.cost;
                            rec.iterations = r.iterations;
                            rec.converged = r.converged;
                        }
                        Err(e) => rec.failure = Some(e.to_string()),
                    }
                }
            }
            if let Some(f) = &rec.failure {
                log::warn!(
                    "trajectory {} noise {} {} {}: {f}",
                    rec.trajectory,
                    rec.noise,
                    rec.strategy,
                    rec.solver
                );
            }
            out.push(rec);
        }
    }
    out
}

/// Records in cell order, then strategy, then solver, independent of
/// scheduling.
pub fn run_sweep(config: &ExperimentConfig, scenarios: &[Scenario]) -> Vec<RunRecord> {
    let dnlo = config.dnlo.params();
    scenarios
        .par_iter()
        .map(|s| run_scenario(s, &config.strategies, &config.solvers, &dnlo))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

fn sci(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.8e}")
    } else {
        String::new()
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> HarnessError + '_ {
    move |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub const RUNS_HEADER: [&str; 17] = [
    "trajectory",
    "noise",
    "seed",
    "gaussian_sigma2",
    "outlier_fraction",
    "drift_rate",
    "strategy",
    "solver",
    "pairs",
    "e_rt",
    "e_rr_deg",
    "e_at",
    "e_ar_deg",
    "cost",
    "iterations",
    "converged",
    "failure",
];

/// Deterministic: contains no timing information.
pub fn write_runs_csv(path: &Path, records: &[RunRecord]) -> Result<(), HarnessError> {
    write_csv(
        path,
        &RUNS_HEADER,
        records.iter().map(|r| {
            let e = r.errors;
            let m = |f: fn(&ErrorReport) -> f64| e.as_ref().map(f).map(sci).unwrap_or_default();
            vec![
                r.trajectory.to_string(),
                r.noise.clone(),
                r.seed.to_string(),
                r.gaussian_sigma2.to_string(),
                r.outlier_fraction.to_string(),
                r.drift_rate.to_string(),
                r.strategy.to_string(),
                r.solver.to_string(),
                r.pairs.to_string(),
                m(|e| e.e_rt),
                m(|e| e.e_rr.to_degrees()),
                m(|e| e.e_at),
                m(|e| e.e_ar.to_degrees()),
                sci(r.cost),
                r.iterations.to_string(),
                r.converged.to_string(),
                r.failure.clone().unwrap_or_default(),
            ]
        }),
    )
}

pub fn write_timings_csv(path: &Path, records: &[RunRecord]) -> Result<(), HarnessError> {
    write_csv(
        path,
        &["trajectory", "noise", "strategy", "solver", "wall_ms"],
        records.iter().map(|r| {
            vec![
                r.trajectory.to_string(),
                r.noise.clone(),
                r.strategy.to_string(),
                r.solver.to_string(),
                format!("{:.3}", r.wall_ms),
            ]
        }),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    RelTranslation,
    RelRotationDeg,
    AbsTranslation,
    AbsRotationDeg,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::RelTranslation,
        Metric::RelRotationDeg,
        Metric::AbsTranslation,
        Metric::AbsRotationDeg,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::RelTranslation => "e_rt",
            Metric::RelRotationDeg => "e_rr_deg",
            Metric::AbsTranslation => "e_at",
            Metric::AbsRotationDeg => "e_ar_deg",
        }
    }

    pub fn of(&self, e: &ErrorReport) -> f64 {
        match self {
            Metric::RelTranslation => e.e_rt,
            Metric::RelRotationDeg => e.e_rr.to_degrees(),
            Metric::AbsTranslation => e.e_at,
            Metric::AbsRotationDeg => e.e_ar.to_degrees(),
        }
    }

    /// Metrics reported with an improvement-over-B1 column.
    pub fn has_improvement(&self) -> bool {
        matches!(self, Metric::AbsTranslation | Metric::AbsRotationDeg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub noise: String,
    pub strategy: SelectionStrategy,
    pub solver: SolverKind,
    pub metric: Metric,
    pub runs: usize,
    pub stats: Option<Summary>,
    /// Median of B1 minus median of this strategy, same noise and solver.
    pub improvement_over_b1: Option<f64>,
}

const B1: SelectionStrategy = SelectionStrategy::Previous(1);

/// Groups by (noise point, strategy, solver). Runs without an estimate
/// are counted in `runs` but excluded from the statistics.
pub fn summarize_runs(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(usize, String, SelectionStrategy, SolverKind)> = Vec::new();
    for r in records {
        let k = (r.noise_index, r.noise.clone(), r.strategy, r.solver);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let group = |noise_index: usize, strategy, solver| {
        records
            .iter()
            .filter(move |r| r.noise_index == noise_index && r.strategy == strategy && r.solver == solver)
    };
    let median_of = |noise_index, strategy, solver, metric: Metric| {
        let v: Vec<f64> = group(noise_index, strategy, solver)
            .filter_map(|r| r.errors.as_ref().map(|e| metric.of(e)))
            .collect();
        summarize(&v).map(|s| s.median)
    };
    let mut rows = Vec::new();
    for (noise_index, noise, strategy, solver) in keys {
        for metric in Metric::ALL {
            let values: Vec<f64> = group(noise_index, strategy, solver)
                .filter_map(|r| r.errors.as_ref().map(|e| metric.of(e)))
                .collect();
            let stats = summarize(&values);
            let improvement_over_b1 = if metric.has_improvement() {
                match (median_of(noise_index, B1, solver, metric), stats) {
                    (Some(b1), Some(s)) => Some(b1 - s.median),
                    _ => None,
                }
            } else {
                None
            };
            rows.push(SummaryRow {
                noise: noise.clone(),
                strategy,
                solver,
                metric,
                runs: group(noise_index, strategy, solver).count(),
                stats,
                improvement_over_b1,
            });
        }
    }
    rows
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    write_csv(
        path,
        &[
            "noise",
            "strategy",
            "solver",
            "metric",
            "runs",
            "n",
            "mean",
            "median",
            "ci95_low",
            "ci95_high",
            "q1",
            "q3",
            "improvement_over_b1",
        ],
        rows.iter().map(|r| {
            let s = |f: fn(&Summary) -> f64| r.stats.as_ref().map(f).map(sci).unwrap_or_default();
            vec![
                r.noise.clone(),
                r.strategy.to_string(),
                r.solver.to_string(),
                r.metric.name().to_string(),
                r.runs.to_string(),
                r.stats.map(|s| s.n).unwrap_or(0).to_string(),
                s(|s| s.mean),
                s(|s| s.median),
                s(|s| s.ci95_low),
                s(|s| s.ci95_high),
                s(|s| s.q1),
                s(|s| s.q3),
                r.improvement_over_b1.map(sci).unwrap_or_default(),
            ]
        }),
    )
}

/// Runs the sweep described by `config`, or by a dataset directory when
/// given, and writes `runs.csv`, `summary.csv`, `timings.csv` and the
/// effective `config.json` into `out`.
pub fn cmd_sweep(
    config: &ExperimentConfig,
    out: &Path,
    dataset: Option<&Path>,
) -> Result<Vec<RunRecord>, HarnessError> {
    let (config, scenarios) = match dataset {
        Some(dir) => {
            let (stored, scenarios) = crate::dataset::load_dataset(dir)?;
            // Solver-side settings come from the caller, data from disk.
            let merged = ExperimentConfig {
                strategies: config.strategies.clone(),
                solvers: config.solvers.clone(),
                dnlo: config.dnlo,
                ..stored
            };
            (merged, scenarios)
        }
        None => {
            config.validate()?;
            (config.clone(), generate_scenarios(config))
        }
    };
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let records = run_sweep(&config, &scenarios);
    write_runs_csv(&out.join(RUNS_FILE), &records)?;
    write_summary_csv(&out.join(SUMMARY_FILE), &summarize_runs(&records))?;
    write_timings_csv(&out.join(TIMINGS_FILE), &records)?;
    let cfg_path = out.join(CONFIG_FILE);
    fs::write(&cfg_path, config.to_json()).map_err(|e| HarnessError::io(&cfg_path, e))?;
    Ok(records)
}
