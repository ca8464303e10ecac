//! Minimum-norm least-squares solves through a truncated SVD.

use faer::Mat;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rank and residual reported alongside every trained model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    /// Number of singular values kept.
    pub rank: usize,
    /// `‖A x − b‖₂`.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct MinNormSolution {
    pub x: DVector<f64>,
    pub diagnostics: SolveDiagnostics,
    /// Singular values in non-increasing order.
    pub singular_values: Vec<f64>,
}

/// Minimum-norm least-squares solution of `A x = b`.
///
/// Singular values below `rcond · σ_max` are treated as zero.
pub fn solve_min_norm(a: &DMatrix<f64>, b: &DVector<f64>, rcond: f64) -> Result<MinNormSolution> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(Error::InvalidSpec("cannot solve an empty system".into()));
    }
    if b.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: b.len() });
    }
    if !(rcond > 0.0 && rcond < 1.0) {
        return Err(Error::InvalidSpec(format!("rcond must lie in (0, 1), got {rcond}")));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Decomposition("system contains non-finite entries".into()));
    }
    let fa = Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)]);
    let svd = fa.thin_svd().map_err(|e| Error::Decomposition(format!("{e:?}")))?;
    let u = svd.U();
    let v = svd.V();
    let s = svd.S().column_vector();
    let k = s.nrows();
    let singular_values: Vec<f64> = (0..k).map(|i| s[i]).collect();
    let smax = singular_values.first().copied().unwrap_or(0.0);
    let cutoff = rcond * smax;
    let rank = singular_values.iter().take_while(|&&sv| sv > cutoff).count();

    // x = V_r diag(1/s_r) U_rᵀ b
    let mut coef = vec![0.0; rank];
    for (i, c) in coef.iter_mut().enumerate() {
        let mut dot = 0.0;
        for r in 0..m {
            dot += u[(r, i)] * b[r];
        }
        *c = dot / singular_values[i];
    }
    let mut x = DVector::zeros(n);
    for (i, c) in coef.iter().enumerate() {
        for r in 0..n {
            x[r] += v[(r, i)] * c;
        }
    }
    let residual = (a * &x - b).norm();
    Ok(MinNormSolution { x, diagnostics: SolveDiagnostics { rank, residual }, singular_values })
}
