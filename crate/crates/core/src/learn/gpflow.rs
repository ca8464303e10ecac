use std::io::Write;

use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::central_differences;
use crate::discretize::fmt_f64;
use crate::domain::TrajectoryDataset;
use crate::error::{check_dim, Error, Result};
use crate::kernel::{Kernel, KernelParams, Rbf};

pub const DEFAULT_EPSILON_GRID: [f64; 5] = [1.0, 2.0, 5.0, 10.0, 20.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpFlowConfig {
    pub epsilon_grid: Vec<f64>,
    pub c_k: f64,
    pub jitter: f64,
}

impl Default for GpFlowConfig {
    fn default() -> Self {
        Self { epsilon_grid: DEFAULT_EPSILON_GRID.to_vec(), c_k: 1.0, jitter: 1e-10 }
    }
}

/// Score of one candidate length scale; `None` when the Gram matrix could not be factored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonScore {
    pub epsilon: f64,
    pub log_marginal_likelihood: Option<f64>,
}

/// Kernel ridge regression of the one-step map `(q, q̇)_j ↦ (q, q̇)_{j+1}`.
///
/// Each output coordinate is regressed separately around the mean of its targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowMapModel {
    pub h: f64,
    pub n: usize,
    pub kernel: KernelParams,
    pub jitter: f64,
    pub log_marginal_likelihood: f64,
    pub selection: Vec<EpsilonScore>,
    pub mean: Vec<f64>,
    pub inputs: Vec<Vec<f64>>,
    /// One row of `2n` dual weights per input.
    pub weights: Vec<Vec<f64>>,
}

/// Roll-out of a flow-map model.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPrediction {
    pub h: f64,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
}

impl FlowPrediction {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Writes `t,q1..qn,qd1..qdn` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.positions.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("q{i}")));
        header.extend((1..=n).map(|i| format!("qd{i}")));
        writeln!(out, "{}", header.join(","))?;
        for (j, (q, v)) in self.positions.iter().zip(&self.velocities).enumerate() {
            let mut row = vec![fmt_f64(j as f64 * self.h)];
            row.extend(q.iter().chain(v).map(|&x| fmt_f64(x)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

impl FlowMapModel {
    pub fn validate(&self) -> Result<()> {
        let d = 2 * self.n;
        KernelParams::new(self.kernel.epsilon, self.kernel.c_k)?;
        check_dim(d, self.mean.len())?;
        check_dim(self.inputs.len(), self.weights.len())?;
        for (x, w) in self.inputs.iter().zip(&self.weights) {
            check_dim(d, x.len())?;
            check_dim(d, w.len())?;
        }
        Ok(())
    }

    /// Predicted next state for the state `x = (q, q̇)`.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(2 * self.n, x.len())?;
        let rbf = Rbf::new(self.kernel);
        let mut out = self.mean.clone();
        for (xi, w) in self.inputs.iter().zip(&self.weights) {
            let k = rbf.value(x, xi);
            for (o, wo) in out.iter_mut().zip(w) {
                *o += k * wo;
            }
        }
        Ok(out)
    }

    /// Iterates the learned map `steps` times from `(q0, q̇0)`.
    pub fn rollout(&self, q0: &[f64], qdot0: &[f64], steps: usize) -> Result<FlowPrediction> {
        check_dim(self.n, q0.len())?;
        check_dim(self.n, qdot0.len())?;
        let mut positions = vec![q0.to_vec()];
        let mut velocities = vec![qdot0.to_vec()];
        let mut x: Vec<f64> = q0.iter().chain(qdot0).copied().collect();
        for _ in 0..steps {
            x = self.predict(&x)?;
            positions.push(x[..self.n].to_vec());
            velocities.push(x[self.n..].to_vec());
        }
        Ok(FlowPrediction { h: self.h, positions, velocities })
    }
}

/// Consecutive interior states of every trajectory, velocities by central differences.
fn flow_samples(dataset: &TrajectoryDataset) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for traj in &dataset.trajectories {
        let states = central_differences(traj)?;
        let flat: Vec<Vec<f64>> =
            states.iter().map(|s| s.q.iter().chain(s.qdot.as_deref().unwrap_or_default()).copied().collect()).collect();
        for pair in flat.windows(2) {
            inputs.push(pair[0].clone());
            targets.push(pair[1].clone());
        }
    }
    if inputs.is_empty() {
        return Err(Error::InvalidSpec("flow-map training needs trajectories with at least four snapshots".into()));
    }
    Ok((inputs, targets))
}

struct Fit {
    lml: f64,
    weights: Vec<Vec<f64>>,
}

fn fit(inputs: &[Vec<f64>], centred: &DMatrix<f64>, kernel: KernelParams, jitter: f64) -> Option<Fit> {
    let rbf = Rbf::new(kernel);
    let m = inputs.len();
    let mut gram = DMatrix::from_fn(m, m, |i, j| rbf.value(&inputs[i], &inputs[j]));
    for i in 0..m {
        gram[(i, i)] += jitter;
    }
    let chol = Cholesky::new(gram)?;
    let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let alpha = chol.solve(centred);
    let outputs = centred.ncols();
    let mut lml = 0.0;
    for o in 0..outputs {
        let y = centred.column(o);
        let a = alpha.column(o);
        lml += -0.5 * y.dot(&a) - log_det_half - 0.5 * m as f64 * (2.0 * std::f64::consts::PI).ln();
    }
    if !lml.is_finite() || alpha.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let weights = (0..m).map(|i| alpha.row(i).iter().copied().collect()).collect();
    Some(Fit { lml, weights })
}

/// Fits the flow-map baseline, choosing `ε` from the grid by log marginal likelihood.
pub fn train_gpflow(dataset: &TrajectoryDataset, config: &GpFlowConfig) -> Result<FlowMapModel> {
    if config.epsilon_grid.is_empty() {
        return Err(Error::InvalidSpec("epsilon grid is empty".into()));
    }
    if !(config.jitter >= 0.0 && config.jitter.is_finite()) {
        return Err(Error::InvalidSpec(format!("jitter must be non-negative, got {}", config.jitter)));
    }
    let params = config.epsilon_grid.iter().map(|&e| KernelParams::new(e, config.c_k)).collect::<Result<Vec<_>>>()?;
    let (inputs, targets) = flow_samples(dataset)?;
    let d = 2 * dataset.n;
    let m = inputs.len();
    let mean: Vec<f64> = (0..d).map(|o| targets.iter().map(|t| t[o]).sum::<f64>() / m as f64).collect();
    let centred = DMatrix::from_fn(m, d, |i, o| targets[i][o] - mean[o]);

    let fits: Vec<Option<Fit>> = params.par_iter().map(|&p| fit(&inputs, &centred, p, config.jitter)).collect();
    let selection: Vec<EpsilonScore> = params
        .iter()
        .zip(&fits)
        .map(|(p, f)| EpsilonScore { epsilon: p.epsilon, log_marginal_likelihood: f.as_ref().map(|f| f.lml) })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, f) in fits.iter().enumerate() {
        if let Some(f) = f {
            if best.is_none_or(|(_, lml)| f.lml > lml) {
                best = Some((i, f.lml));
            }
        }
    }
    let (index, lml) = best.ok_or_else(|| {
        Error::IllConditioned(format!("Gram matrix not positive definite for any epsilon in {:?}", config.epsilon_grid))
    })?;
    let weights = fits.into_iter().nth(index).flatten().map(|f| f.weights).unwrap_or_default();
    Ok(FlowMapModel {
        h: dataset.h,
        n: dataset.n,
        kernel: params[index],
        jitter: config.jitter,
        log_marginal_likelihood: lml,
        selection,
        mean,
        inputs,
        weights,
    })
}
