//! Cross-checks between the looped transformer and the gradient-descent oracle.

use serde::Serialize;

use crate::attention::{attn_closed_form, attn_general, default_params};
use crate::error::{Error, Result};
use crate::gd_oracle::{
    log_prediction_bound, run_gd, theoretical_prediction_bound, BoundParams, RegressionProblem,
};
use crate::looped_tf::{run_loops, LoopConfig, LoopTrajectory};
use crate::rng::RandomSource;
use crate::spectral::{RealMatrix, RealVector};
use crate::task::{sample_gaussian_matrix, PromptState, TaskInstance};

/// Default relative tolerance for the transformer/GD state comparison.
pub const EQUIVALENCE_RTOL: f64 = 1e-9;

/// Slack allowed when comparing empirical errors against the bound.
pub const BOUND_SLACK: f64 = 1e-9;

/// Absolute tolerance between the two attention paths.
pub const ATTENTION_TOLERANCE: f64 = 1e-12;

/// Below this both sides of a bound comparison are compared as logarithms.
pub const LOG_COMPARE_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub instance_seed: u64,
    pub loops: usize,
    /// `max_t ‖q^(t) + α θ^(t)‖∞`
    pub max_state_gap: f64,
    /// `‖TF output − α θ^(T)‖∞`
    pub output_gap: f64,
    /// `max(1, |α|, ‖Xᵀy‖∞, L)`
    pub scale: f64,
    /// Absolute tolerance applied to both gaps.
    pub tolerance: f64,
    pub passed: bool,
}

impl EquivalenceReport {
    pub fn summary_line(&self) -> String {
        format!(
            "equivalence seed={} status={} loops={} max_state_gap={:e} output_gap={:e} tol={:e}",
            self.instance_seed,
            status(self.passed),
            self.loops,
            self.max_state_gap,
            self.output_gap,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub instance_seed: u64,
    pub kappa: f64,
    /// `bound − empirical` per loop; the log ratio where both are below 1e-300.
    pub per_step_margin: Vec<f64>,
    pub min_margin: f64,
    pub passed: bool,
}

impl BoundReport {
    pub fn summary_line(&self) -> String {
        format!(
            "bound seed={} status={} kappa={} loops={} min_margin={:e}",
            self.instance_seed,
            status(self.passed),
            self.kappa,
            self.per_step_margin.len().saturating_sub(1),
            self.min_margin
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionOracleReport {
    pub trials: usize,
    /// Largest gap between the query-row block of the general formula and the closed form.
    pub max_gap: f64,
    /// Count of entries that the mask should zero but did not.
    pub masked_nonzero: usize,
    pub passed: bool,
}

impl AttentionOracleReport {
    pub fn summary_line(&self) -> String {
        format!(
            "attention trials={} status={} max_gap={:e} masked_nonzero={}",
            self.trials,
            status(self.passed),
            self.max_gap,
            self.masked_nonzero
        )
    }
}

fn status(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Runs the transformer and gradient descent from `θ^(0) = −q^(0)/α` with the
/// same step sizes and compares `q^(t)` against `−α θ^(t)` at every loop.
/// `rel_tol` is scaled by `max(1, |α|, ‖Xᵀy‖∞, L)`.
pub fn check_equivalence(
    task: &TaskInstance,
    config: &LoopConfig,
    rel_tol: f64,
) -> Result<EquivalenceReport> {
    let alpha = task.alpha();
    if alpha == 0.0 {
        return Err(Error::InvalidQuery);
    }
    let tf = run_loops(task, config)?;
    let problem = RegressionProblem::from_task(task)?;
    let theta0 = task.q0().scale(-1.0 / alpha);
    let gd = run_gd(&problem, &theta0, config)?;

    let mut max_state_gap: f64 = 0.0;
    for (q, theta) in tf.q_states.iter().zip(&gd.theta_states) {
        max_state_gap = max_state_gap.max(q.axpy(alpha, theta)?.norm_inf());
    }
    let last = &gd.theta_states[gd.theta_states.len() - 1];
    let output_gap = tf.tf_output.sub(&last.scale(alpha))?.norm_inf();

    let xty_inf = task.x().tr_mul_vec(task.y())?.norm_inf();
    let scale = 1f64.max(alpha.abs()).max(xty_inf).max(problem.smoothness());
    let tolerance = rel_tol * scale;
    Ok(EquivalenceReport {
        instance_seed: task.seed(),
        loops: config.loops,
        max_state_gap,
        output_gap,
        scale,
        tolerance,
        passed: max_state_gap <= tolerance && output_gap <= tolerance,
    })
}

fn margin(bound: f64, log_bound: f64, empirical: f64) -> f64 {
    if bound < LOG_COMPARE_FLOOR && empirical < LOG_COMPARE_FLOOR {
        log_bound - empirical.ln()
    } else {
        bound - empirical
    }
}

/// Compares an existing trajectory against `|α| e^{−t/(2κ)}` loop by loop.
pub fn bound_report(
    task: &TaskInstance,
    trajectory: &LoopTrajectory,
    kappa: f64,
) -> Result<BoundReport> {
    let bounds = BoundParams::new(kappa, 1.0, task.alpha())?;
    let per_step_margin: Vec<f64> = trajectory
        .per_step_errors
        .iter()
        .enumerate()
        .map(|(t, &emp)| {
            margin(
                theoretical_prediction_bound(t, &bounds),
                log_prediction_bound(t, &bounds),
                emp,
            )
        })
        .collect();
    let min_margin = per_step_margin
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(BoundReport {
        instance_seed: task.seed(),
        kappa,
        per_step_margin,
        min_margin,
        passed: min_margin >= -BOUND_SLACK,
    })
}

/// Bound dominance for `T` loops at `η = 1/L` from `q^(0) = 0`.
pub fn check_bound(task: &TaskInstance, loops: usize) -> Result<BoundReport> {
    check_bound_with(task, &LoopConfig::inverse_smoothness(loops))
}

/// As [`check_bound`], for a caller-supplied config that must still satisfy
/// the theorem's hypotheses.
pub fn check_bound_with(task: &TaskInstance, config: &LoopConfig) -> Result<BoundReport> {
    if task.q0().iter().any(|&v| v != 0.0) {
        return Err(Error::HypothesisViolation(
            "the bound assumes q0 = 0".into(),
        ));
    }
    let problem = RegressionProblem::from_task(task)?;
    let theta0 = RealVector::zeros(task.d());
    BoundParams::for_run(&problem, config, &theta0, task.alpha()).map_err(|e| match e {
        Error::ScheduleMismatch(msg) => Error::HypothesisViolation(msg),
        other => other,
    })?;
    let trajectory = run_loops(task, config)?;
    bound_report(task, &trajectory, problem.kappa())
}

/// Compares the literal attention formula against the closed form on one prompt.
/// Returns `(max gap on the query block, number of nonzero masked entries)`.
pub fn compare_attention_paths(z: &PromptState) -> Result<(f64, usize)> {
    let (n, d) = (z.n(), z.d());
    let general = attn_general(z, &default_params(n, d))?;
    let closed = attn_closed_form(&z.x_block(), &z.labels(), &z.query(), z.alpha())?;
    let mut gap: f64 = 0.0;
    let mut masked_nonzero = 0;
    for i in 0..=n {
        for j in 0..=d {
            let v = general[(i, j)];
            if i == n && j < d {
                gap = gap.max((v - closed[j]).abs());
            } else if v != 0.0 {
                masked_nonzero += 1;
            }
        }
    }
    Ok((gap, masked_nonzero))
}

fn random_vector(dim: usize, rng: &mut RandomSource) -> Result<RealVector> {
    RealVector::new(sample_gaussian_matrix(1, dim, rng)?.as_slice().to_vec())
}

/// Random prompts with Gaussian `X`, `y`, `q` and `α`.
pub fn attention_oracle_report(
    n: usize,
    d: usize,
    trials: usize,
    rng: &mut RandomSource,
) -> Result<AttentionOracleReport> {
    let mut max_gap: f64 = 0.0;
    let mut masked_nonzero = 0;
    for _ in 0..trials {
        let x: RealMatrix = sample_gaussian_matrix(n, d, rng)?;
        let y = random_vector(n, rng)?;
        let q = random_vector(d, rng)?;
        let alpha = rng.standard_normal();
        let z = PromptState::from_blocks(&x, &y, &q, alpha)?;
        let (gap, nonzero) = compare_attention_paths(&z)?;
        max_gap = max_gap.max(gap);
        masked_nonzero += nonzero;
    }
    Ok(AttentionOracleReport {
        trials,
        max_gap,
        masked_nonzero,
        passed: max_gap <= ATTENTION_TOLERANCE && masked_nonzero == 0,
    })
}

pub fn check_attention_oracle(n: usize, d: usize, trials: usize, rng: &mut RandomSource) -> bool {
    attention_oracle_report(n, d, trials, rng).is_ok_and(|r| r.passed)
}
