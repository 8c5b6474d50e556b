//! Dense linear algebra for small symmetric positive-semidefinite problems:
//! extreme eigenvalues, spectral norm, condition number and least squares.

mod dense;
mod eigen;

pub use dense::{RealMatrix, RealVector};
pub use eigen::{sym_eigen, SymmetricEigen, SYMMETRY_TOLERANCE};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `lambda_min / lambda_max` below this is treated as singular.
pub const SINGULARITY_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub condition_number: f64,
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_eig_extremes(a: &RealMatrix) -> Result<(f64, f64)> {
    let eig = sym_eigen(a)?;
    Ok((eig.values[0], eig.values[eig.values.len() - 1]))
}

/// `||A||_2`. Symmetric input is answered from its own spectrum, anything else
/// through `sqrt(lambda_max(A^T A))`.
pub fn spectral_norm(a: &RealMatrix) -> Result<f64> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::dim("spectral norm of an empty matrix"));
    }
    if a.is_square() && a.asymmetry() <= SYMMETRY_TOLERANCE {
        let (lo, hi) = sym_eig_extremes(a)?;
        return Ok(lo.abs().max(hi.abs()));
    }
    let (_, hi) = sym_eig_extremes(&a.gram())?;
    Ok(hi.max(0.0).sqrt())
}

fn summarize(lambda_min: f64, lambda_max: f64) -> Result<SpectralSummary> {
    if !(lambda_max > 0.0) || lambda_min < SINGULARITY_RATIO * lambda_max {
        let ratio = if lambda_max > 0.0 {
            lambda_min / lambda_max
        } else {
            0.0
        };
        return Err(Error::Singular { ratio });
    }
    Ok(SpectralSummary {
        lambda_min,
        lambda_max,
        condition_number: lambda_max / lambda_min,
    })
}

fn check_tall(x: &RealMatrix) -> Result<()> {
    if x.rows() < x.cols() {
        return Err(Error::UnderDetermined {
            n: x.rows(),
            d: x.cols(),
        });
    }
    Ok(())
}

/// Spectrum summary of `X^T X`; errors when it is not invertible in working precision.
pub fn condition_number(x: &RealMatrix) -> Result<SpectralSummary> {
    check_tall(x)?;
    let (lo, hi) = sym_eig_extremes(&x.gram())?;
    summarize(lo, hi)
}

/// `(X^T X)^{-1} X^T y`, applying the inverse through the eigendecomposition of `X^T X`.
pub fn least_squares(x: &RealMatrix, y: &RealVector) -> Result<RealVector> {
    check_tall(x)?;
    if y.dim() != x.rows() {
        return Err(Error::dim(format!(
            "{} labels for {} rows",
            y.dim(),
            x.rows()
        )));
    }
    let eig = sym_eigen(&x.gram())?;
    let d = eig.values.len();
    summarize(eig.values[0], eig.values[d - 1])?;

    let rhs = x.tr_mul_vec(y)?;
    let mut theta = vec![0.0; d];
    for k in 0..d {
        let coef: f64 = (0..d).map(|i| eig.vectors[(i, k)] * rhs[i]).sum::<f64>() / eig.values[k];
        for (i, t) in theta.iter_mut().enumerate() {
            *t += eig.vectors[(i, k)] * coef;
        }
    }
    Ok(RealVector::from_vec_unchecked(theta))
}
