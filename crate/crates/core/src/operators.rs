//! Analysis operators with the row statistics every bound consumes.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::math::{gaussian_matrix, numerical_rank, Rng};

/// Default row-norm interval for non-tight random frames.
pub const DEFAULT_ROW_NORM_RANGE: (f64, f64) = (0.5, 1.5);

const FRAME_ATTEMPTS: usize = 3;

/// A `p x n` analysis operator `Omega` with cached row norms, Gram matrix
/// `G = Omega Omega^T` and the normalized squared Gram
/// `H_ij = G_ij^2 / (|w_i| |w_j|)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisOperator {
    omega: DMatrix<f64>,
    row_norms: DVector<f64>,
    gram: DMatrix<f64>,
    norm_gram_sq: DMatrix<f64>,
}

impl AnalysisOperator {
    pub fn new(omega: DMatrix<f64>) -> Result<Self> {
        let (p, n) = omega.shape();
        if p == 0 || n == 0 {
            return Err(Error::Empty("analysis operator"));
        }
        if omega.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("analysis operator has non-finite entries"));
        }
        let row_norms = DVector::from_fn(p, |i, _| omega.row(i).norm());
        if let Some(row) = row_norms.iter().position(|&r| r == 0.0) {
            return Err(Error::ZeroRow { row });
        }
        let gram = &omega * omega.transpose();
        let norm_gram_sq =
            DMatrix::from_fn(p, p, |i, j| gram[(i, j)].powi(2) / (row_norms[i] * row_norms[j]));
        Ok(AnalysisOperator {
            omega,
            row_norms,
            gram,
            norm_gram_sq,
        })
    }

    /// Number of analysis coefficients.
    pub fn p(&self) -> usize {
        self.omega.nrows()
    }

    /// Signal dimension.
    pub fn n(&self) -> usize {
        self.omega.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn row_norms(&self) -> &DVector<f64> {
        &self.row_norms
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn norm_gram_sq(&self) -> &DMatrix<f64> {
        &self.norm_gram_sq
    }

    /// `Omega x`.
    pub fn analyze(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch {
                context: "signal length",
                expected: self.n(),
                actual: x.len(),
            });
        }
        Ok(&self.omega * x)
    }

    /// Rows of `Omega` listed in `rows`, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> DMatrix<f64> {
        self.omega.select_rows(rows.iter())
    }

    /// Same operator with rows reordered so that row `k` of the result is
    /// row `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.p() {
            return Err(Error::DimensionMismatch {
                context: "row permutation",
                expected: self.p(),
                actual: perm.len(),
            });
        }
        AnalysisOperator::new(self.select_rows(perm))
    }
}

pub fn make_operator(omega: DMatrix<f64>) -> Result<AnalysisOperator> {
    AnalysisOperator::new(omega)
}

/// `Omega = I_n`; analysis sparsity becomes plain sparsity.
pub fn identity_operator(n: usize) -> Result<AnalysisOperator> {
    AnalysisOperator::new(DMatrix::identity(n, n))
}

/// `(n-1) x n` forward differences, row `i` is `e_{i+1} - e_i`.
pub fn difference_operator(n: usize) -> Result<AnalysisOperator> {
    if n < 2 {
        return Err(Error::domain(format!(
            "difference operator needs n >= 2, got {n}"
        )));
    }
    let mut omega = DMatrix::zeros(n - 1, n);
    for i in 0..n - 1 {
        omega[(i, i)] = -1.0;
        omega[(i, i + 1)] = 1.0;
    }
    AnalysisOperator::new(omega)
}

/// Random non-tight frame: orthonormalize the columns of a Gaussian `p x n`
/// matrix, then give each row an independent uniform norm in
/// `[row_norm_low, row_norm_high]`.
pub fn gen_random_frame(
    p: usize,
    n: usize,
    row_norm_low: f64,
    row_norm_high: f64,
    rng: &mut Rng,
) -> Result<AnalysisOperator> {
    if n == 0 || p < n {
        return Err(Error::domain(format!(
            "random frame needs p >= n >= 1, got p = {p}, n = {n}"
        )));
    }
    if !(row_norm_low > 0.0 && row_norm_low <= row_norm_high && row_norm_high.is_finite()) {
        return Err(Error::domain(format!(
            "row norm interval must satisfy 0 < low <= high, got [{row_norm_low}, {row_norm_high}]"
        )));
    }
    for _ in 0..FRAME_ATTEMPTS {
        let g = gaussian_matrix(rng, p, n);
        if numerical_rank(&g) < n {
            continue;
        }
        let q = g.qr().q();
        let mut omega = q;
        let mut degenerate = false;
        for i in 0..p {
            let norm = omega.row(i).norm();
            if norm < 1e-12 {
                degenerate = true;
                break;
            }
            let target = row_norm_low + (row_norm_high - row_norm_low) * rng.uniform();
            omega.row_mut(i).scale_mut(target / norm);
        }
        if degenerate || numerical_rank(&omega) < n {
            continue;
        }
        return AnalysisOperator::new(omega);
    }
    Err(Error::RankDeficient {
        attempts: FRAME_ATTEMPTS,
    })
}
