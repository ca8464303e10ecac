//! Kernel learners: the inverse modified Lagrangian (LSI), the exact-Lagrangian
//! comparison models (LGP, LGPExact) and the flow-map baseline (GPFlow).

mod gpflow;
mod lgp;
mod lsi;
mod model;
mod solve;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::discretize::Scheme;
use crate::error::{Error, Result};
use crate::kernel::{Kernel, KernelParams};

pub use gpflow::{train_gpflow, FlowMapModel, FlowPrediction, GpFlowConfig, DEFAULT_EPSILON_GRID};
pub use lgp::{assemble_lgp_system, lgp_states, train_lgp, LgpMode};
pub use lsi::{assemble_lsi_system, lsi_centers, train_lsi};
pub use model::{KernelModel, ModelEval, ModelKind, SavedModel};
pub use solve::{solve_min_norm, MinNormSolution, SolveDiagnostics};

/// Settings shared by the LSI and LGP learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kernel: KernelParams,
    pub scheme: Scheme,
    /// Right-hand side of the non-triviality row.
    pub c: f64,
    /// Point `(q*, q̇*)` where the model is pinned to zero; `None` means the origin.
    pub normalisation_point: Option<Vec<f64>>,
    /// Relative singular-value cutoff.
    pub rcond: f64,
}

impl TrainConfig {
    pub fn new(kernel: KernelParams, scheme: Scheme) -> Self {
        Self { kernel, scheme, c: 1.0, normalisation_point: None, rcond: 1e-8 }
    }

    pub fn validate(&self) -> Result<()> {
        KernelParams::new(self.kernel.epsilon, self.kernel.c_k)?;
        if self.c == 0.0 || !self.c.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "normalisation constant c must be finite and non-zero, got {}",
                self.c
            )));
        }
        if !(self.rcond > 0.0 && self.rcond < 1.0) {
            return Err(Error::InvalidSpec(format!("rcond must lie in (0, 1), got {}", self.rcond)));
        }
        Ok(())
    }

    /// The normalisation point resolved for dimension `n`.
    pub fn normalisation_point(&self, n: usize) -> Result<Vec<f64>> {
        match &self.normalisation_point {
            Some(p) if p.len() == 2 * n => Ok(p.clone()),
            Some(p) => Err(Error::DimensionMismatch { expected: 2 * n, found: p.len() }),
            None => Ok(vec![0.0; 2 * n]),
        }
    }
}

/// An assembled training system together with the centers its columns refer to.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub centers: Vec<Vec<f64>>,
    /// Number of leading data-consistency rows (the remaining two rows are the
    /// non-triviality and normalisation conditions).
    pub data_rows: usize,
}

impl LinearSystem {
    pub(crate) fn from_blocks(
        blocks: Vec<Vec<f64>>,
        nontrivial: Vec<f64>,
        normalise: Vec<f64>,
        c: f64,
        centers: Vec<Vec<f64>>,
    ) -> Self {
        let m = centers.len();
        let data_rows: usize = blocks.iter().map(|b| b.len() / m).sum();
        let mut matrix = DMatrix::zeros(data_rows + 2, m);
        let mut row = 0;
        for block in &blocks {
            for chunk in block.chunks_exact(m) {
                for (j, &v) in chunk.iter().enumerate() {
                    matrix[(row, j)] = v;
                }
                row += 1;
            }
        }
        for j in 0..m {
            matrix[(data_rows, j)] = nontrivial[j];
            matrix[(data_rows + 1, j)] = normalise[j];
        }
        let mut rhs = DVector::zeros(data_rows + 2);
        rhs[data_rows] = c;
        Self { matrix, rhs, centers, data_rows }
    }

    /// Minimum-norm least-squares solve of the whole system, followed by an exact
    /// fit of the two normalisation conditions.
    ///
    /// The truncated solve leaves those rows off by about `rcond` relative. They
    /// are restored with `B ← s·B + t·k(pin, Z)`: the data rows are homogeneous,
    /// so rescaling leaves the fitted dynamics unchanged, and the kernel section
    /// at the pin is close to a constant over the data. The solution is kept as
    /// is when the 2×2 system for `(s, t)` is singular.
    pub fn solve(&self, rcond: f64) -> Result<MinNormSolution> {
        let mut sol = solve_min_norm(&self.matrix, &self.rhs, rcond)?;
        let (nontrivial, normalise) = (self.matrix.row(self.data_rows), self.matrix.row(self.data_rows + 1));
        let c = self.rhs[self.data_rows];
        let section = normalise.transpose();
        let (a1, a2) = (nontrivial.dot(&sol.x.transpose()), normalise.dot(&sol.x.transpose()));
        let (b1, b2) = (nontrivial.dot(&normalise), normalise.dot(&normalise));
        let det = a1 * b2 - b1 * a2;
        if det.is_finite() && det.abs() > 1e-12 * (a1 * b2).abs().max((b1 * a2).abs()) {
            let s = c * b2 / det;
            let t = -c * a2 / det;
            sol.x = &sol.x * s + section * t;
            sol.diagnostics.residual = (&self.matrix * &sol.x - &self.rhs).norm();
        }
        Ok(sol)
    }

    /// `max |(A x − b)_r|` over the data-consistency rows.
    pub fn data_residual_inf(&self, x: &DVector<f64>) -> f64 {
        let r = &self.matrix * x - &self.rhs;
        r.rows(0, self.data_rows).iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
    }
}

/// Corners of the unit hypercube `[0,1]^d`, in binary counting order.
pub fn hypercube_corners(d: usize) -> Vec<Vec<f64>> {
    (0..1usize << d).map(|mask| (0..d).map(|bit| ((mask >> bit) & 1) as f64).collect()).collect()
}

/// Non-triviality row: the corner-averaged `Σ_a ∂k/∂q̇^a(corner, z_i)` per center.
pub(crate) fn nontriviality_row<K: Kernel>(kernel: &K, n: usize, centers: &[Vec<f64>]) -> Vec<f64> {
    let corners = hypercube_corners(2 * n);
    let weight = 1.0 / corners.len() as f64;
    centers
        .iter()
        .map(|z| corners.iter().map(|corner| kernel.gradient(corner, z)[n..].iter().sum::<f64>()).sum::<f64>() * weight)
        .collect()
}

/// Normalisation row `k((q*, q̇*), z_i)`.
pub(crate) fn normalisation_row<K: Kernel>(kernel: &K, point: &[f64], centers: &[Vec<f64>]) -> Vec<f64> {
    centers.iter().map(|z| kernel.value(point, z)).collect()
}
