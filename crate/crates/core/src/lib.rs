//! Linear looped transformers solving in-context vector-generation tasks.
//!
//! A single linear-attention layer with fixed weights, looped `T` times, moves
//! the prompt's query row exactly along the gradient-descent trajectory for the
//! in-context least-squares problem. This crate simulates that loop, runs plain
//! gradient descent as an independent reference, and checks the two against each
//! other and against the `|α| e^{−T/(2κ)}` error bound.
//!
//! Module map:
//! - [`spectral`]: dense matrices, symmetric eigenvalues, condition numbers, least squares
//! - [`task`]: seeded synthetic tasks and the prompt matrix
//! - [`attention`]: masked linear attention, literal and closed form
//! - [`looped_tf`]: the loop itself and its trajectory
//! - [`gd_oracle`]: gradient descent, loss constants, convergence bounds
//! - [`verify`]: equivalence, bound and attention cross-checks
//! - [`experiment`]: the condition-number sweep and its CSV outputs

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod error;
pub mod experiment;
pub mod gd_oracle;
pub mod io;
pub mod looped_tf;
pub mod rng;
pub mod spectral;
pub mod task;
pub mod verify;

pub use error::{Error, Result};
pub use looped_tf::{AttentionEngine, LoopConfig, LoopTrajectory, StepSchedule};
pub use rng::RandomSource;
pub use spectral::{RealMatrix, RealVector, SpectralSummary};
pub use task::{PromptState, TaskInstance};
