//! Linear attention with a causal generation mask, `(M ∘ (Z Q Zᵀ)) Z P`.
//!
//! With the fixed parameters from [`default_params`] only the query row of the
//! output is nonzero, and its first `d` entries reduce to `(XᵀX) q + α Xᵀy`. Both
//! the literal matrix formula and that closed form live here so either can be
//! used to check the other.

use crate::error::{Error, Result};
use crate::spectral::{RealMatrix, RealVector};
use crate::task::PromptState;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// Combined query-key matrix, `(d+1) x (d+1)`.
    pub q: RealMatrix,
    /// Combined value-output matrix, `(d+1) x (d+1)`.
    pub p: RealMatrix,
    /// Causal mask, `(n+1) x (n+1)` with entries in {0, 1}.
    pub mask: RealMatrix,
}

/// `Q = I`, `P = diag(I_d, 0)`, and a mask that lets only the query row read
/// the `n` example rows.
pub fn default_params(n: usize, d: usize) -> AttentionParams {
    let q = RealMatrix::identity(d + 1);
    let mut p = RealMatrix::identity(d + 1);
    p[(d, d)] = 0.0;
    let mut mask = RealMatrix::zeros(n + 1, n + 1);
    for j in 0..n {
        mask[(n, j)] = 1.0;
    }
    AttentionParams { q, p, mask }
}

/// The attention output computed exactly as the masked-Hadamard formula.
pub fn attn_general(z: &PromptState, params: &AttentionParams) -> Result<RealMatrix> {
    let m = z.matrix();
    let (rows, cols) = (m.rows(), m.cols());
    let shapes_ok = params.q.rows() == cols
        && params.q.cols() == cols
        && params.p.rows() == cols
        && params.p.cols() == cols
        && params.mask.rows() == rows
        && params.mask.cols() == rows;
    if !shapes_ok {
        return Err(Error::dim(format!(
            "prompt {rows}x{cols} with Q {}x{}, P {}x{}, M {}x{}",
            params.q.rows(),
            params.q.cols(),
            params.p.rows(),
            params.p.cols(),
            params.mask.rows(),
            params.mask.cols()
        )));
    }
    let scores = m.matmul(&params.q)?.matmul(&m.transpose())?;
    let masked = params.mask.hadamard(&scores)?;
    masked.matmul(m)?.matmul(&params.p)
}

/// Precomputed `XᵀX` and `Xᵀy` for a fixed example block. The loop never
/// changes `X` or `y`, so this is built once per run.
#[derive(Debug, Clone)]
pub struct ClosedForm {
    gram: RealMatrix,
    xty: RealVector,
}

impl ClosedForm {
    pub fn new(x: &RealMatrix, y: &RealVector) -> Result<Self> {
        Ok(ClosedForm {
            gram: x.gram(),
            xty: x.tr_mul_vec(y)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.xty.dim()
    }

    /// `(XᵀX) q + α Xᵀy`
    pub fn apply(&self, q: &RealVector, alpha: f64) -> Result<RealVector> {
        self.gram.mul_vec(q)?.axpy(alpha, &self.xty)
    }

    /// Same as [`ClosedForm::apply`] with the sign of the label term flipped.
    /// Only used to confirm the verifier notices a broken attention path.
    pub fn apply_faulty(&self, q: &RealVector, alpha: f64) -> Result<RealVector> {
        self.gram.mul_vec(q)?.axpy(-alpha, &self.xty)
    }
}

/// The nonzero block of the attention output as a `d`-vector.
pub fn attn_closed_form(
    x: &RealMatrix,
    y: &RealVector,
    q: &RealVector,
    alpha: f64,
) -> Result<RealVector> {
    if q.dim() != x.cols() {
        return Err(Error::dim(format!(
            "q has dim {}, X has {} columns",
            q.dim(),
            x.cols()
        )));
    }
    ClosedForm::new(x, y)?.apply(q, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand_prompt() -> (RealMatrix, RealVector, RealVector, f64) {
        let x = RealMatrix::from_rows(&[&[1.0], &[2.0]]).unwrap();
        let y = RealVector::new(vec![1.0, 2.0]).unwrap();
        (x, y, RealVector::zeros(1), 2.0)
    }

    #[test]
    fn default_params_small() {
        let p = default_params(2, 1);
        assert_eq!(p.q, RealMatrix::identity(2));
        assert_eq!(
            p.p,
            RealMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]]).unwrap()
        );
        let mask =
            RealMatrix::from_rows(&[&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0], &[1.0, 1.0, 0.0]]).unwrap();
        assert_eq!(p.mask, mask);
    }

    #[test]
    fn default_params_shape() {
        for (n, d) in [(1, 1), (5, 2), (16, 4)] {
            let p = default_params(n, d);
            let sums: Vec<f64> = (0..=n).map(|i| p.mask.row(i).iter().sum()).collect();
            let mut expected = vec![0.0; n + 1];
            expected[n] = n as f64;
            assert_eq!(sums, expected);
            assert!(p.mask.as_slice().iter().all(|&v| v == 0.0 || v == 1.0));
            assert_eq!(p.p.matmul(&p.p).unwrap(), p.p);
        }
    }

    #[test]
    fn general_hand_value() {
        let (x, y, q, alpha) = hand_prompt();
        let z = PromptState::from_blocks(&x, &y, &q, alpha).unwrap();
        let out = attn_general(&z, &default_params(2, 1)).unwrap();
        let expected = RealMatrix::from_rows(&[&[0.0, 0.0], &[0.0, 0.0], &[10.0, 0.0]]).unwrap();
        assert_eq!(out, expected);
    }

    #[test]
    fn closed_form_hand_value() {
        let (x, y, q, alpha) = hand_prompt();
        assert_eq!(
            attn_closed_form(&x, &y, &q, alpha).unwrap().as_slice(),
            &[10.0]
        );
        // q = 0, alpha = 1 leaves X^T y
        assert_eq!(
            attn_closed_form(&x, &y, &q, 1.0).unwrap().as_slice(),
            &[5.0]
        );
    }

    #[test]
    fn closed_form_identity_examples() {
        let x = RealMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        let y = RealVector::new(vec![0.3, -0.4, 9.0]).unwrap();
        let q = RealVector::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(attn_closed_form(&x, &y, &q, 0.0).unwrap(), q);
    }

    #[test]
    fn zero_query_and_labels_give_zero() {
        let x = RealMatrix::from_rows(&[&[1.5, -2.0], &[0.5, 1.0], &[3.0, 0.25]]).unwrap();
        let z = PromptState::from_blocks(&x, &RealVector::zeros(3), &RealVector::zeros(2), 7.0)
            .unwrap();
        let out = attn_general(&z, &default_params(3, 2)).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_errors() {
        let (x, y, q, alpha) = hand_prompt();
        let z = PromptState::from_blocks(&x, &y, &q, alpha).unwrap();
        assert!(matches!(
            attn_general(&z, &default_params(3, 1)),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            attn_general(&z, &default_params(2, 2)),
            Err(Error::Dimension(_))
        ));
        let bad_q = RealVector::zeros(2);
        assert!(attn_closed_form(&x, &y, &bad_q, alpha).is_err());
    }
}
