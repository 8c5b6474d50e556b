//! Plain gradient descent on `ℓ(θ) = ½‖y − Xθ‖²`, the smoothness and convexity
//! constants of that loss, and the closed-form convergence bounds.
//!
//! This is the reference the looped transformer is checked against, so it does
//! not share any code path with [`crate::looped_tf`] beyond the dense primitives.

use crate::error::{Error, Result};
use crate::looped_tf::{LoopConfig, StepSchedule};
use crate::spectral::{spectral_norm, sym_eig_extremes, RealMatrix, RealVector, SINGULARITY_RATIO};
use crate::task::TaskInstance;

/// Relative slack accepted when checking that a constant step equals `1/L`.
const INVERSE_STEP_SLACK: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct RegressionProblem {
    x: RealMatrix,
    y: RealVector,
    gram: RealMatrix,
    xty: RealVector,
    smoothness: f64,
    strong_convexity: f64,
    target: Option<RealVector>,
}

impl RegressionProblem {
    pub fn new(x: RealMatrix, y: RealVector) -> Result<Self> {
        if y.dim() != x.rows() {
            return Err(Error::dim(format!(
                "{} labels for {} rows",
                y.dim(),
                x.rows()
            )));
        }
        if x.rows() < x.cols() {
            return Err(Error::UnderDetermined {
                n: x.rows(),
                d: x.cols(),
            });
        }
        let gram = x.gram();
        let xty = x.tr_mul_vec(&y)?;
        let smoothness = spectral_norm(&gram)?;
        let (strong_convexity, _) = sym_eig_extremes(&gram)?;
        if !(smoothness > 0.0) || strong_convexity < SINGULARITY_RATIO * smoothness {
            return Err(Error::Singular {
                ratio: if smoothness > 0.0 {
                    strong_convexity / smoothness
                } else {
                    0.0
                },
            });
        }
        Ok(RegressionProblem {
            x,
            y,
            gram,
            xty,
            smoothness,
            strong_convexity,
            target: None,
        })
    }

    /// The regression problem behind a task, with `θ*` attached as target.
    pub fn from_task(task: &TaskInstance) -> Result<Self> {
        Ok(Self::new(task.x().clone(), task.y().clone())?.with_target(task.theta_star().clone()))
    }

    pub fn with_target(mut self, theta_star: RealVector) -> Self {
        self.target = Some(theta_star);
        self
    }

    pub fn x(&self) -> &RealMatrix {
        &self.x
    }

    pub fn y(&self) -> &RealVector {
        &self.y
    }

    pub fn target(&self) -> Option<&RealVector> {
        self.target.as_ref()
    }

    /// `L = ‖XᵀX‖`
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    /// `μ = λ_min(XᵀX)`
    pub fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }

    /// `κ = L / μ`
    pub fn kappa(&self) -> f64 {
        self.smoothness / self.strong_convexity
    }
}

/// `½‖y − Xθ‖²`
pub fn loss(problem: &RegressionProblem, theta: &RealVector) -> Result<f64> {
    let residual = problem.y.sub(&problem.x.mul_vec(theta)?)?;
    Ok(0.5 * residual.iter().map(|r| r * r).sum::<f64>())
}

/// `XᵀXθ − Xᵀy`
pub fn gradient(problem: &RegressionProblem, theta: &RealVector) -> Result<RealVector> {
    problem.gram.mul_vec(theta)?.sub(&problem.xty)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdTrajectory {
    /// `θ^(0) ..= θ^(T)`
    pub theta_states: Vec<RealVector>,
    /// `‖θ^(t) − θ*‖₂`, empty unless the problem carries a target.
    pub param_errors: Vec<f64>,
    pub losses: Vec<f64>,
}

pub fn run_gd(
    problem: &RegressionProblem,
    theta0: &RealVector,
    config: &LoopConfig,
) -> Result<GdTrajectory> {
    if theta0.dim() != problem.x.cols() {
        return Err(Error::dim(format!(
            "theta0 has dim {}, expected {}",
            theta0.dim(),
            problem.x.cols()
        )));
    }
    let steps = config.resolve_steps(&problem.x)?;
    let mut theta_states = Vec::with_capacity(steps.len() + 1);
    theta_states.push(theta0.clone());
    for eta in steps {
        let current = &theta_states[theta_states.len() - 1];
        let next = current.axpy(-eta, &gradient(problem, current)?)?;
        theta_states.push(next);
    }
    let losses = theta_states
        .iter()
        .map(|t| loss(problem, t))
        .collect::<Result<Vec<_>>>()?;
    let param_errors = match &problem.target {
        Some(star) => theta_states
            .iter()
            .map(|t| Ok(t.sub(star)?.norm2()))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    Ok(GdTrajectory {
        theta_states,
        param_errors,
        losses,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub kappa: f64,
    /// Upper bound on `‖θ^(0) − θ*‖₂`.
    pub r: f64,
    pub alpha: f64,
}

impl BoundParams {
    pub fn new(kappa: f64, r: f64, alpha: f64) -> Result<Self> {
        if !(kappa >= 1.0) || !kappa.is_finite() {
            return Err(Error::HypothesisViolation(format!(
                "condition number {kappa} < 1"
            )));
        }
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::HypothesisViolation(format!(
                "initial distance {r} is negative"
            )));
        }
        Ok(BoundParams { kappa, r, alpha })
    }

    /// Bound parameters for running `config` on `problem` from `θ^(0)`.
    ///
    /// The bounds only hold for the constant `η = 1/L` schedule; anything else is
    /// refused. `R` is `‖θ^(0) − θ*‖₂` when the problem has a target, else 1.
    pub fn for_run(
        problem: &RegressionProblem,
        config: &LoopConfig,
        theta0: &RealVector,
        alpha: f64,
    ) -> Result<Self> {
        check_inverse_smoothness(problem, &config.schedule)?;
        let r = match problem.target() {
            Some(star) => theta0.sub(star)?.norm2(),
            None => 1.0,
        };
        Self::new(problem.kappa(), r, alpha)
    }
}

fn check_inverse_smoothness(problem: &RegressionProblem, schedule: &StepSchedule) -> Result<()> {
    let is_inverse = |eta: f64| (eta * problem.smoothness() - 1.0).abs() <= INVERSE_STEP_SLACK;
    let ok = match schedule {
        StepSchedule::InverseSmoothness => true,
        StepSchedule::Constant(eta) => is_inverse(*eta),
        StepSchedule::Explicit(steps) => steps.iter().all(|&eta| is_inverse(eta)),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::ScheduleMismatch(format!(
            "{schedule:?} with L = {}",
            problem.smoothness()
        )))
    }
}

/// Decay exponents below `-700` are evaluated through the log of the whole bound,
/// so a tiny decay factor is not flushed to zero before scaling. Comparisons
/// below ~1e-300 should use the `log_*` forms directly.
const LOG_DOMAIN_EXPONENT: f64 = -700.0;

fn scaled_decay(exponent: f64, scale: f64) -> f64 {
    if exponent < LOG_DOMAIN_EXPONENT {
        (exponent + scale.ln()).exp()
    } else {
        scale * exponent.exp()
    }
}

/// `ln(e^{−t/κ} R²)`
pub fn log_param_bound(t: usize, bounds: &BoundParams) -> f64 {
    -(t as f64) / bounds.kappa + 2.0 * bounds.r.ln()
}

/// Squared-distance bound `e^{−t/κ} R²`.
pub fn theoretical_param_bound(t: usize, bounds: &BoundParams) -> f64 {
    scaled_decay(-(t as f64) / bounds.kappa, bounds.r * bounds.r)
}

/// `ln(|α| R e^{−t/(2κ)})`
pub fn log_prediction_bound(t: usize, bounds: &BoundParams) -> f64 {
    -(t as f64) / (2.0 * bounds.kappa) + bounds.alpha.abs().ln() + bounds.r.ln()
}

/// Prediction-error bound `|α| R e^{−t/(2κ)}`.
pub fn theoretical_prediction_bound(t: usize, bounds: &BoundParams) -> f64 {
    scaled_decay(
        -(t as f64) / (2.0 * bounds.kappa),
        bounds.alpha.abs() * bounds.r,
    )
}
