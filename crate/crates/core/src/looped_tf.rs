//! The looped transformer: one attention layer applied `T` times with the update
//! `Z ← Z − η Attn(Z)`, read out as `−q^(T)`.

use serde::{Deserialize, Serialize};

use crate::attention::{attn_general, default_params, AttentionParams, ClosedForm};
use crate::error::{Error, Result};
use crate::spectral::{spectral_norm, RealMatrix, RealVector};
use crate::task::{assemble_prompt, PromptState, TaskInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    /// `η = 1/L` with `L = ||XᵀX||`, resolved per task.
    InverseSmoothness,
    Constant(f64),
    /// One step size per loop; length must equal the loop count.
    Explicit(Vec<f64>),
}

/// Which attention implementation drives the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionEngine {
    #[default]
    ClosedForm,
    /// The literal `(M ∘ ZQZᵀ)ZP` formula; slow, used for oracle runs.
    General,
    /// Closed form with a sign error in the label term.
    FaultInjected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub loops: usize,
    pub schedule: StepSchedule,
    #[serde(default)]
    pub engine: AttentionEngine,
}

impl LoopConfig {
    /// `T` loops at `η = 1/L`.
    pub fn inverse_smoothness(loops: usize) -> Self {
        LoopConfig {
            loops,
            schedule: StepSchedule::InverseSmoothness,
            engine: AttentionEngine::ClosedForm,
        }
    }

    pub fn constant(loops: usize, eta: f64) -> Self {
        LoopConfig {
            loops,
            schedule: StepSchedule::Constant(eta),
            engine: AttentionEngine::ClosedForm,
        }
    }

    pub fn explicit(steps: Vec<f64>) -> Self {
        LoopConfig {
            loops: steps.len(),
            schedule: StepSchedule::Explicit(steps),
            engine: AttentionEngine::ClosedForm,
        }
    }

    pub fn with_engine(mut self, engine: AttentionEngine) -> Self {
        self.engine = engine;
        self
    }

    /// The concrete step sizes `η^(0..T)` for examples `x`.
    pub fn resolve_steps(&self, x: &RealMatrix) -> Result<Vec<f64>> {
        let steps = match &self.schedule {
            StepSchedule::InverseSmoothness => {
                let l = spectral_norm(&x.gram())?;
                if !(l > 0.0) {
                    return Err(Error::InvalidSchedule(
                        "||XᵀX|| = 0, 1/L is undefined".into(),
                    ));
                }
                vec![1.0 / l; self.loops]
            }
            StepSchedule::Constant(eta) => vec![*eta; self.loops],
            StepSchedule::Explicit(steps) => {
                if steps.len() != self.loops {
                    return Err(Error::InvalidSchedule(format!(
                        "{} step sizes for {} loops",
                        steps.len(),
                        self.loops
                    )));
                }
                steps.clone()
            }
        };
        if let Some(bad) = steps.iter().find(|eta| !(eta.is_finite() && **eta > 0.0)) {
            return Err(Error::InvalidSchedule(format!(
                "step size {bad} is not positive"
            )));
        }
        Ok(steps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopTrajectory {
    /// `q^(0) ..= q^(T)`
    pub q_states: Vec<RealVector>,
    /// `−q^(T)`
    pub tf_output: RealVector,
    /// `|⟨−q^(t), θ*⟩ − α|` for every `t`.
    pub per_step_errors: Vec<f64>,
    pub step_sizes: Vec<f64>,
}

impl LoopTrajectory {
    pub fn loops(&self) -> usize {
        self.q_states.len() - 1
    }
}

fn check_step(eta: f64) -> Result<()> {
    if eta.is_finite() && eta > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidSchedule(format!(
            "step size {eta} is not positive"
        )))
    }
}

/// One loop through the literal attention formula: `Z − η Attn(Z; Q, P)` over
/// the whole matrix.
pub fn loop_step(z: &PromptState, eta: f64, params: &AttentionParams) -> Result<PromptState> {
    check_step(eta)?;
    let attn = attn_general(z, params)?;
    let mut next = z.matrix().clone();
    for i in 0..next.rows() {
        for j in 0..next.cols() {
            next[(i, j)] -= eta * attn[(i, j)];
        }
    }
    PromptState::from_matrix(next)
}

/// One loop through the closed form; writes only the query row.
pub fn loop_step_closed_form(
    z: &PromptState,
    eta: f64,
    attention: &ClosedForm,
) -> Result<PromptState> {
    check_step(eta)?;
    let mut next = z.clone();
    let q = z.query();
    let update = attention.apply(&q, z.alpha())?;
    next.set_query(&q.axpy(-eta, &update)?);
    Ok(next)
}

/// Runs `config.loops` steps from the task's prompt and records every query row.
pub fn run_loops(task: &TaskInstance, config: &LoopConfig) -> Result<LoopTrajectory> {
    let steps = config.resolve_steps(task.x())?;
    let mut z = assemble_prompt(task);
    let mut q_states = Vec::with_capacity(steps.len() + 1);
    q_states.push(z.query());

    match config.engine {
        AttentionEngine::General => {
            let params = default_params(task.n(), task.d());
            for &eta in &steps {
                z = loop_step(&z, eta, &params)?;
                q_states.push(z.query());
            }
        }
        AttentionEngine::ClosedForm | AttentionEngine::FaultInjected => {
            let attention = ClosedForm::new(task.x(), task.y())?;
            let faulty = config.engine == AttentionEngine::FaultInjected;
            for &eta in &steps {
                let q = z.query();
                let update = if faulty {
                    attention.apply_faulty(&q, z.alpha())?
                } else {
                    attention.apply(&q, z.alpha())?
                };
                z.set_query(&q.axpy(-eta, &update)?);
                q_states.push(z.query());
            }
        }
    }

    let per_step_errors = q_states
        .iter()
        .map(|q| prediction_error(&q.scale(-1.0), task.theta_star(), task.alpha()))
        .collect::<Result<Vec<_>>>()?;
    let tf_output = q_states[q_states.len() - 1].scale(-1.0);
    Ok(LoopTrajectory {
        q_states,
        tf_output,
        per_step_errors,
        step_sizes: steps,
    })
}

/// `|⟨output, θ*⟩ − α|`
pub fn prediction_error(output: &RealVector, theta_star: &RealVector, alpha: f64) -> Result<f64> {
    Ok((output.dot(theta_star)? - alpha).abs())
}
