//! The condition-number sweep: for each sample size `n`, several random tasks
//! are run through the looped transformer at `η = 1/L`, and every loop becomes
//! one [`ConvergenceRecord`].
//!
//! Trial `i` of the sweep (counting across all `n`) uses seed `base_seed + i`,
//! and records are always emitted sorted by `(n, trial, t)`, so output bytes do
//! not depend on how many workers ran the trials.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gd_oracle::{theoretical_prediction_bound, BoundParams, RegressionProblem};
use crate::looped_tf::{run_loops, LoopConfig};
use crate::task::make_task_seeded;
use crate::verify::{bound_report, BOUND_SLACK};

/// Ratios below this are floored before taking the log.
pub const NORM_ERR_FLOOR: f64 = 1e-300;

pub const RECORD_HEADER: &str = "n,d,trial,seed,kappa,t,emp_err,bound,norm_log_err";
pub const SUMMARY_HEADER: &str = "n,d,trials,mean_kappa,mean_final_emp_err,mean_final_bound,slope";
pub const PLOT_HEADER: &str = "n,t,mean_norm_log_err,bound_log";

/// Window `[start, end]` over which log-error slopes are fitted.
pub const SLOPE_WINDOW: (usize, usize) = (10, 100);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub d: usize,
    pub n_values: Vec<usize>,
    pub loops: usize,
    pub trials: usize,
    pub base_seed: u64,
    pub alpha: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            d: 4,
            n_values: vec![16, 32, 64, 128],
            loops: 200,
            trials: 10,
            base_seed: 0,
            alpha: 1.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::dim("d must be at least 1"));
        }
        if let Some(&n) = self.n_values.iter().find(|&&n| n <= self.d) {
            return Err(Error::UnderDetermined { n, d: self.d });
        }
        if self.n_values.is_empty() || self.trials == 0 || self.loops == 0 {
            return Err(Error::InvalidTask(
                "need at least one n, one trial and one loop".into(),
            ));
        }
        if self.alpha == 0.0 || !self.alpha.is_finite() {
            return Err(Error::InvalidQuery);
        }
        Ok(())
    }

    /// Seed of trial `trial` at the `n_index`-th sample size.
    pub fn seed_for(&self, n_index: usize, trial: usize) -> u64 {
        self.base_seed
            .wrapping_add((n_index * self.trials + trial) as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub n: usize,
    pub d: usize,
    pub trial: usize,
    pub seed: u64,
    pub kappa: f64,
    pub t: usize,
    /// `|⟨−q^(t), θ*⟩ − α|`
    pub emp_err: f64,
    /// `|α| e^{−t/(2κ)}`
    pub bound: f64,
    /// `ln(‖θ^(t) − θ*‖² / ‖θ^(0) − θ*‖²)` with `θ^(t) = −q^(t)/α`, floored at `ln(1e-300)`.
    pub norm_log_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub kappa: f64,
    pub final_emp_err: f64,
    pub final_bound: f64,
    pub min_margin: f64,
    pub bound_passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeSummary {
    pub n: usize,
    pub d: usize,
    pub trials: usize,
    pub mean_kappa: f64,
    pub mean_final_emp_err: f64,
    pub mean_final_bound: f64,
    /// Least-squares slope of the trial-mean `norm_log_err` over [`SLOPE_WINDOW`].
    pub slope: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<ConvergenceRecord>,
    pub trials: Vec<TrialSummary>,
    pub sizes: Vec<SizeSummary>,
}

impl ExperimentOutput {
    /// Records where `emp_err > bound + 1e-9`.
    pub fn bound_violations(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.emp_err > r.bound + BOUND_SLACK)
            .count()
    }
}

fn run_trial(
    config: &ExperimentConfig,
    n: usize,
    trial: usize,
    seed: u64,
) -> Result<(Vec<ConvergenceRecord>, TrialSummary)> {
    let task = make_task_seeded(n, config.d, config.alpha, seed)?;
    let kappa = RegressionProblem::from_task(&task)?.kappa();
    let trajectory = run_loops(&task, &LoopConfig::inverse_smoothness(config.loops))?;
    let report = bound_report(&task, &trajectory, kappa)?;
    let bounds = BoundParams::new(kappa, 1.0, config.alpha)?;

    let theta_err_sq = |q: &crate::spectral::RealVector| -> Result<f64> {
        let e = q.scale(-1.0 / config.alpha).sub(task.theta_star())?;
        Ok(e.iter().map(|v| v * v).sum())
    };
    let initial = theta_err_sq(&trajectory.q_states[0])?;

    let mut records = Vec::with_capacity(trajectory.q_states.len());
    for (t, q) in trajectory.q_states.iter().enumerate() {
        let ratio = theta_err_sq(q)? / initial;
        records.push(ConvergenceRecord {
            n,
            d: config.d,
            trial,
            seed,
            kappa,
            t,
            emp_err: trajectory.per_step_errors[t],
            bound: theoretical_prediction_bound(t, &bounds),
            norm_log_err: ratio.max(NORM_ERR_FLOOR).ln(),
        });
    }
    let last = &records[records.len() - 1];
    let summary = TrialSummary {
        n,
        trial,
        seed,
        kappa,
        final_emp_err: last.emp_err,
        final_bound: last.bound,
        min_margin: report.min_margin,
        bound_passed: report.passed,
    };
    Ok((records, summary))
}

/// Runs the sweep on `workers` threads (0 means rayon's default).
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    config.validate()?;
    let jobs: Vec<(usize, usize, u64)> = config
        .n_values
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| (0..config.trials).map(move |trial| (i, n, trial)))
        .map(|(i, n, trial)| (n, trial, config.seed_for(i, trial)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidTask(format!("thread pool: {e}")))?;
    let results: Vec<_> = pool.install(|| {
        jobs.par_iter()
            .map(|&(n, trial, seed)| run_trial(config, n, trial, seed))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut records = Vec::with_capacity(results.iter().map(|(r, _)| r.len()).sum());
    let mut trials = Vec::with_capacity(results.len());
    for (r, s) in results {
        records.extend(r);
        trials.push(s);
    }
    records.sort_by_key(|r| (r.n, r.trial, r.t));
    trials.sort_by_key(|s| (s.n, s.trial));
    let sizes = summarize_sizes(config, &records, &trials);
    Ok(ExperimentOutput {
        records,
        trials,
        sizes,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    sum / count as f64
}

fn summarize_sizes(
    config: &ExperimentConfig,
    records: &[ConvergenceRecord],
    trials: &[TrialSummary],
) -> Vec<SizeSummary> {
    let series = mean_series(records);
    config
        .n_values
        .iter()
        .map(|&n| {
            let here: Vec<&TrialSummary> = trials.iter().filter(|s| s.n == n).collect();
            let curve: Vec<(usize, f64)> = series
                .iter()
                .filter(|p| p.n == n)
                .map(|p| (p.t, p.mean_norm_log_err))
                .collect();
            SizeSummary {
                n,
                d: config.d,
                trials: here.len(),
                mean_kappa: mean(here.iter().map(|s| s.kappa)),
                mean_final_emp_err: mean(here.iter().map(|s| s.final_emp_err)),
                mean_final_bound: mean(here.iter().map(|s| s.final_bound)),
                slope: window_slope(&curve, SLOPE_WINDOW),
            }
        })
        .collect()
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let mx = mean(points.iter().map(|p| p.0));
    let my = mean(points.iter().map(|p| p.1));
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Slope of a `(t, value)` curve restricted to `window` (inclusive).
pub fn window_slope(curve: &[(usize, f64)], window: (usize, usize)) -> f64 {
    let points: Vec<(f64, f64)> = curve
        .iter()
        .filter(|(t, _)| (window.0..=window.1).contains(t))
        .map(|&(t, v)| (t as f64, v))
        .collect();
    fit_slope(&points)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotPoint {
    pub n: usize,
    pub t: usize,
    pub mean_norm_log_err: f64,
    /// Trial mean of `ln(e^{−t/κ})`, the normalized squared-distance bound.
    pub bound_log: f64,
}

/// Per-`n` trial means of the normalized log error and of the log bound.
pub fn mean_series(records: &[ConvergenceRecord]) -> Vec<PlotPoint> {
    let mut groups: BTreeMap<(usize, usize), (f64, f64, usize)> = BTreeMap::new();
    for r in records {
        let entry = groups.entry((r.n, r.t)).or_insert((0.0, 0.0, 0));
        entry.0 += r.norm_log_err;
        entry.1 += -(r.t as f64) / r.kappa;
        entry.2 += 1;
    }
    groups
        .into_iter()
        .map(|((n, t), (err, bound, count))| PlotPoint {
            n,
            t,
            mean_norm_log_err: err / count as f64,
            bound_log: bound / count as f64,
        })
        .collect()
}

pub fn write_records_csv<W: Write>(
    records: &[ConvergenceRecord],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "{RECORD_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{:?},{},{:?},{:?},{:?}",
            r.n, r.d, r.trial, r.seed, r.kappa, r.t, r.emp_err, r.bound, r.norm_log_err
        )?;
    }
    out.flush()
}

pub fn write_summary_csv<W: Write>(sizes: &[SizeSummary], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for s in sizes {
        writeln!(
            out,
            "{},{},{},{:?},{:?},{:?},{:?}",
            s.n, s.d, s.trials, s.mean_kappa, s.mean_final_emp_err, s.mean_final_bound, s.slope
        )?;
    }
    out.flush()
}

pub fn write_plot_csv<W: Write>(points: &[PlotPoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{PLOT_HEADER}")?;
    for p in points {
        writeln!(
            out,
            "{},{},{:?},{:?}",
            p.n, p.t, p.mean_norm_log_err, p.bound_log
        )?;
    }
    out.flush()
}

pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<ConvergenceRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers().map_err(|e| Error::Format(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != RECORD_HEADER {
        return Err(Error::Format(format!("expected header {RECORD_HEADER:?}")));
    }
    reader
        .deserialize()
        .map(|row| row.map_err(|e| Error::Format(e.to_string())))
        .collect()
}
