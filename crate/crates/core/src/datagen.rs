//! Training data generation: Halton-sampled initial states, fine Störmer–Verlet
//! ground truth subsampled to the output step, and central-difference
//! derivative reconstruction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{BenchmarkSystem, Bounds, State, Trajectory, TrajectoryDataset};
use crate::error::{check_dim, Error, Result};

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv_base = 1.0 / base as f64;
    let mut f = inv_base;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv_base;
    }
    r
}

/// `index`-th Halton point in `[0, 1)^dim`, coordinate `d` using the `d`-th prime.
pub fn halton_point(index: u64, dim: usize) -> Result<Vec<f64>> {
    if index == 0 {
        return Err(Error::InvalidSpec("Halton index starts at 1".into()));
    }
    if dim == 0 || dim > PRIMES.len() {
        return Err(Error::InvalidSpec(format!("Halton dimension must be in 1..={}", PRIMES.len())));
    }
    Ok(PRIMES[..dim].iter().map(|&b| radical_inverse(index, b)).collect())
}

/// Base-2 Halton points `1..=count` scaled to `(lo, hi)`.
pub fn halton_velocities(count: usize, lo: f64, hi: f64) -> Vec<f64> {
    (1..=count as u64).map(|i| lo + radical_inverse(i, 2) * (hi - lo)).collect()
}

/// Halton points `1..=count` scaled into `bounds`, one base per coordinate.
pub fn halton_vectors(count: usize, bounds: &Bounds) -> Result<Vec<Vec<f64>>> {
    (1..=count as u64).map(|i| Ok(bounds.scale(&halton_point(i, bounds.dim())?))).collect()
}

/// Störmer–Verlet (kick–drift–kick) for `qddot = force(q)`.
///
/// Returns `steps + 1` states `(q, qdot)` including the initial one.
pub fn stormer_verlet_with<F>(force: F, q0: &[f64], qdot0: &[f64], h: f64, steps: usize) -> Vec<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut out = Vec::with_capacity(steps + 1);
    let mut q = q0.to_vec();
    let mut v = qdot0.to_vec();
    let mut a = force(&q);
    out.push((q.clone(), v.clone()));
    for _ in 0..steps {
        for i in 0..q.len() {
            v[i] += 0.5 * h * a[i];
            q[i] += h * v[i];
        }
        a = force(&q);
        for i in 0..q.len() {
            v[i] += 0.5 * h * a[i];
        }
        out.push((q.clone(), v.clone()));
    }
    out
}

/// Störmer–Verlet on a benchmark system's exact equations of motion.
pub fn stormer_verlet(
    system: &BenchmarkSystem,
    q0: &[f64],
    qdot0: &[f64],
    h_fine: f64,
    steps: usize,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    if !(h_fine > 0.0) {
        return Err(Error::InvalidSpec(format!("step must be positive, got {h_fine}")));
    }
    check_dim(system.dim(), q0.len())?;
    check_dim(system.dim(), qdot0.len())?;
    Ok(stormer_verlet_with(|q| system.force(q), q0, qdot0, h_fine, steps))
}

/// Classical fourth-order Runge–Kutta for `qddot = force(q)`, returning the
/// state after every `substeps` internal steps of size `h / substeps`.
///
/// Used as a high-accuracy stand-in for the exact flow.
pub fn reference_flow<F>(
    force: F,
    q0: &[f64],
    qdot0: &[f64],
    h: f64,
    outputs: usize,
    substeps: usize,
) -> Vec<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = q0.len();
    let dt = h / substeps as f64;
    let mut q = q0.to_vec();
    let mut v = qdot0.to_vec();
    let mut out = Vec::with_capacity(outputs + 1);
    out.push((q.clone(), v.clone()));
    let shifted =
        |base: &[f64], dir: &[f64], s: f64| -> Vec<f64> { base.iter().zip(dir).map(|(b, d)| b + s * d).collect() };
    for _ in 0..outputs {
        for _ in 0..substeps {
            let k1q = v.clone();
            let k1v = force(&q);
            let k2q = shifted(&v, &k1v, 0.5 * dt);
            let k2v = force(&shifted(&q, &k1q, 0.5 * dt));
            let k3q = shifted(&v, &k2v, 0.5 * dt);
            let k3v = force(&shifted(&q, &k2q, 0.5 * dt));
            let k4q = shifted(&v, &k3v, dt);
            let k4v = force(&shifted(&q, &k3q, dt));
            for i in 0..n {
                q[i] += dt / 6.0 * (k1q[i] + 2.0 * k2q[i] + 2.0 * k3q[i] + k4q[i]);
                v[i] += dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
            }
        }
        out.push((q.clone(), v.clone()));
    }
    out
}

/// Initial-state sampling over `(q, qdot)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    /// Box over `(q_1..q_n, qdot_1..qdot_n)`.
    pub bounds: Bounds,
    pub count: usize,
    /// Leading Halton indices to discard.
    #[serde(default)]
    pub skip: u64,
}

/// Ground-truth integration and subsampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSpec {
    /// Output step size.
    pub h: f64,
    /// Snapshots per trajectory.
    pub steps_per_sample: usize,
    /// Internal integration step; must divide `h`.
    pub h_fine: f64,
}

impl GroundTruthSpec {
    /// Internal step defaults to `h / 500`.
    pub fn new(h: f64, steps_per_sample: usize) -> Self {
        Self { h, steps_per_sample, h_fine: h / 500.0 }
    }

    /// Number of fine steps per output step.
    pub fn substeps(&self) -> Result<usize> {
        if !(self.h > 0.0 && self.h_fine > 0.0) {
            return Err(Error::InvalidSpec("step sizes must be positive".into()));
        }
        let ratio = self.h / self.h_fine;
        let m = ratio.round();
        if m < 1.0 || (ratio - m).abs() > 1e-9 * ratio {
            return Err(Error::InvalidSpec(format!("h_fine = {} does not divide h = {}", self.h_fine, self.h)));
        }
        Ok(m as usize)
    }

    pub fn validate(&self) -> Result<usize> {
        if self.steps_per_sample < 3 {
            return Err(Error::InvalidSpec(format!(
                "trajectory length must be at least 3, got {}",
                self.steps_per_sample
            )));
        }
        self.substeps()
    }
}

/// Integrates one Halton-sampled initial state per trajectory and keeps
/// positions only, every `h/h_fine`-th fine state.
pub fn generate_dataset(
    system: &BenchmarkSystem,
    sampler: &SamplerSpec,
    gt: &GroundTruthSpec,
) -> Result<TrajectoryDataset> {
    let n = system.dim();
    check_dim(2 * n, sampler.bounds.dim())?;
    if sampler.count == 0 {
        return Err(Error::InvalidSpec("sample count must be at least 1".into()));
    }
    let m = gt.validate()?;
    let starts = (0..sampler.count as u64)
        .map(|i| halton_point(sampler.skip + i + 1, 2 * n).map(|u| sampler.bounds.scale(&u)))
        .collect::<Result<Vec<_>>>()?;
    let fine_steps = (gt.steps_per_sample - 1) * m;
    let trajectories = starts
        .par_iter()
        .map(|x| {
            let path = stormer_verlet_with(|q| system.force(q), &x[..n], &x[n..], gt.h_fine, fine_steps);
            let positions = path.into_iter().step_by(m).map(|(q, _)| q).collect();
            Trajectory::new(positions, gt.h)
        })
        .collect::<Result<Vec<_>>>()?;
    TrajectoryDataset::new(n, gt.h, sampler.bounds.clone(), trajectories)
}

/// Second-order central differences at interior snapshots `1..len−1`.
pub fn central_differences(traj: &Trajectory) -> Result<Vec<State>> {
    if traj.len() < 3 {
        return Err(Error::TrajectoryTooShort { len: traj.len(), min: 3 });
    }
    let h = traj.h;
    Ok(traj
        .triples()
        .map(|(qm, q, qp)| {
            let qdot = qm.iter().zip(qp).map(|(a, b)| (b - a) / (2.0 * h)).collect();
            let qddot = qm.iter().zip(q).zip(qp).map(|((a, b), c)| (c - 2.0 * b + a) / (h * h)).collect();
            State { q: q.to_vec(), qdot: Some(qdot), qddot: Some(qddot) }
        })
        .collect())
}
