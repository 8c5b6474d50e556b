//! Synthetic in-context tasks and the prompt matrix built from them.

use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::spectral::{RealMatrix, RealVector};

/// Allowed deviation of `||theta_star||_2` from one.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-12;

/// `n x d` matrix of i.i.d. standard normal draws, filled row-major.
pub fn sample_gaussian_matrix(n: usize, d: usize, rng: &mut RandomSource) -> Result<RealMatrix> {
    if n == 0 || d == 0 {
        return Err(Error::dim(format!("cannot sample a {n}x{d} matrix")));
    }
    let entries = (0..n * d).map(|_| rng.standard_normal()).collect();
    RealMatrix::new(n, d, entries)
}

/// Uniform draw from the unit sphere in `R^d` (normalized Gaussian).
pub fn sample_unit_sphere(d: usize, rng: &mut RandomSource) -> Result<RealVector> {
    if d == 0 {
        return Err(Error::dim("unit sphere of dimension 0"));
    }
    loop {
        let draw: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let norm = draw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            return RealVector::new(draw.into_iter().map(|v| v / norm).collect());
        }
    }
}

/// One realizable problem: examples `X`, labels `y = X theta_star`, query `alpha`
/// and the initial query row `q0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstance {
    x: RealMatrix,
    y: RealVector,
    theta_star: RealVector,
    alpha: f64,
    q0: RealVector,
    seed: u64,
}

impl TaskInstance {
    /// Assembles a task from explicit parts, with `q0 = 0`. Labels are recomputed
    /// as `X theta_star`.
    pub fn from_parts(
        x: RealMatrix,
        theta_star: RealVector,
        alpha: f64,
        seed: u64,
    ) -> Result<Self> {
        let (n, d) = (x.rows(), x.cols());
        if n <= d {
            return Err(Error::UnderDetermined { n, d });
        }
        if alpha == 0.0 || !alpha.is_finite() {
            return Err(Error::InvalidQuery);
        }
        if theta_star.dim() != d {
            return Err(Error::dim(format!(
                "theta_star has dim {}, X has {d} columns",
                theta_star.dim()
            )));
        }
        let norm = theta_star.norm2();
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::InvalidTask(format!(
                "||theta_star|| = {norm}, expected 1"
            )));
        }
        let y = x.mul_vec(&theta_star)?;
        Ok(TaskInstance {
            x,
            y,
            theta_star,
            alpha,
            q0: RealVector::zeros(d),
            seed,
        })
    }

    /// Like [`TaskInstance::from_parts`] but also checks stored labels against
    /// `X theta_star` bit for bit.
    pub fn from_parts_with_labels(
        x: RealMatrix,
        y: RealVector,
        theta_star: RealVector,
        alpha: f64,
        seed: u64,
    ) -> Result<Self> {
        let task = Self::from_parts(x, theta_star, alpha, seed)?;
        if task.y.dim() != y.dim() {
            return Err(Error::dim(format!(
                "{} labels for {} rows",
                y.dim(),
                task.y.dim()
            )));
        }
        if task
            .y
            .iter()
            .zip(y.iter())
            .any(|(a, b)| a.to_bits() != b.to_bits())
        {
            return Err(Error::InvalidTask("labels are not X * theta_star".into()));
        }
        Ok(task)
    }

    /// Replaces the initial query row.
    pub fn with_q0(mut self, q0: RealVector) -> Result<Self> {
        if q0.dim() != self.d() {
            return Err(Error::dim(format!(
                "q0 has dim {}, expected {}",
                q0.dim(),
                self.d()
            )));
        }
        self.q0 = q0;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn x(&self) -> &RealMatrix {
        &self.x
    }

    pub fn y(&self) -> &RealVector {
        &self.y
    }

    pub fn theta_star(&self) -> &RealVector {
        &self.theta_star
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn q0(&self) -> &RealVector {
        &self.q0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Draws `X` then `theta_star` from `rng`. The task records `rng.seed()`, so it
/// replays exactly only when `rng` is fresh.
pub fn make_task(n: usize, d: usize, alpha: f64, rng: &mut RandomSource) -> Result<TaskInstance> {
    if alpha == 0.0 || !alpha.is_finite() {
        return Err(Error::InvalidQuery);
    }
    if d == 0 {
        return Err(Error::dim("feature dimension must be at least 1"));
    }
    if n <= d {
        return Err(Error::UnderDetermined { n, d });
    }
    let x = sample_gaussian_matrix(n, d, rng)?;
    let theta_star = sample_unit_sphere(d, rng)?;
    TaskInstance::from_parts(x, theta_star, alpha, rng.seed())
}

pub fn make_task_seeded(n: usize, d: usize, alpha: f64, seed: u64) -> Result<TaskInstance> {
    make_task(n, d, alpha, &mut RandomSource::new(seed))
}

/// The `(n+1) x (d+1)` prompt `[[X, y], [q^T, alpha]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptState {
    z: RealMatrix,
    n: usize,
    d: usize,
}

impl PromptState {
    pub fn from_blocks(x: &RealMatrix, y: &RealVector, q: &RealVector, alpha: f64) -> Result<Self> {
        let (n, d) = (x.rows(), x.cols());
        if y.dim() != n || q.dim() != d {
            return Err(Error::dim(format!(
                "prompt blocks: X is {n}x{d}, y has dim {}, q has dim {}",
                y.dim(),
                q.dim()
            )));
        }
        let mut z = RealMatrix::zeros(n + 1, d + 1);
        for i in 0..n {
            for j in 0..d {
                z[(i, j)] = x[(i, j)];
            }
            z[(i, d)] = y[i];
        }
        for j in 0..d {
            z[(n, j)] = q[j];
        }
        z[(n, d)] = alpha;
        Ok(PromptState { z, n, d })
    }

    /// Interprets a raw `(n+1) x (d+1)` matrix as a prompt.
    pub fn from_matrix(z: RealMatrix) -> Result<Self> {
        if z.rows() < 2 || z.cols() < 2 {
            return Err(Error::dim(format!(
                "prompt must be at least 2x2, got {}x{}",
                z.rows(),
                z.cols()
            )));
        }
        let (n, d) = (z.rows() - 1, z.cols() - 1);
        Ok(PromptState { z, n, d })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &RealMatrix {
        &self.z
    }

    pub fn into_matrix(self) -> RealMatrix {
        self.z
    }

    pub fn x_block(&self) -> RealMatrix {
        let entries = (0..self.n)
            .flat_map(|i| self.z.row(i)[..self.d].to_vec())
            .collect();
        RealMatrix::new(self.n, self.d, entries).expect("prompt block is finite")
    }

    pub fn labels(&self) -> RealVector {
        RealVector::from_vec_unchecked((0..self.n).map(|i| self.z[(i, self.d)]).collect())
    }

    /// The bottom-left row `q^(t)`.
    pub fn query(&self) -> RealVector {
        RealVector::from_vec_unchecked(self.z.row(self.n)[..self.d].to_vec())
    }

    pub fn alpha(&self) -> f64 {
        self.z[(self.n, self.d)]
    }

    pub(crate) fn set_query(&mut self, q: &RealVector) {
        debug_assert_eq!(q.dim(), self.d);
        for j in 0..self.d {
            self.z[(self.n, j)] = q[j];
        }
    }
}

pub fn assemble_prompt(task: &TaskInstance) -> PromptState {
    PromptState::from_blocks(task.x(), task.y(), task.q0(), task.alpha())
        .expect("task invariants guarantee conforming blocks")
}
