//! Evaluation of predicted motions and learned energies.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretize::fmt_f64;
use crate::error::{check_dim, Error, Result};
use crate::field::LagrangianField;

/// A scalar function on `TQ` with a gradient.
pub trait ScalarField: Sync {
    /// Dimension of the flat point `x = (q, q̇)`.
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// The energy `q̇·∂L/∂q̇ − L` of a Lagrangian field, differentiated through the field's jet.
#[derive(Debug, Clone)]
pub struct Energy<F>(pub F);

impl<F: LagrangianField> ScalarField for Energy<F> {
    fn dim(&self) -> usize {
        2 * self.0.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let n = self.0.dim();
        self.0.energy(&x[..n], &x[n..])
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.0.dim();
        self.0.jet(&x[..n], &x[n..]).energy_gradient(&x[n..])
    }
}

/// A scalar field given by closures.
pub struct FnField<V, G> {
    pub dim: usize,
    pub value: V,
    pub gradient: G,
}

impl<V, G> ScalarField for FnField<V, G>
where
    V: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.gradient)(x)
    }
}

/// Energy evaluated along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl EnergyTrace {
    /// `max − min` of the trace.
    pub fn band(&self) -> f64 {
        let (lo, hi) =
            self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if self.values.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }

    /// Least-squares slope of the values against time.
    pub fn slope(&self) -> f64 {
        let m = self.values.len() as f64;
        if self.values.len() < 2 {
            return 0.0;
        }
        let tm = self.times.iter().sum::<f64>() / m;
        let vm = self.values.iter().sum::<f64>() / m;
        let (mut num, mut den) = (0.0, 0.0);
        for (t, v) in self.times.iter().zip(&self.values) {
            num += (t - tm) * (v - vm);
            den += (t - tm) * (t - tm);
        }
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    /// Band width of the trace after removing its least-squares line.
    pub fn detrended_band(&self) -> f64 {
        let slope = self.slope();
        let m = self.values.len() as f64;
        let tm = self.times.iter().sum::<f64>() / m;
        let vm = self.values.iter().sum::<f64>() / m;
        let residuals = self.times.iter().zip(&self.values).map(|(t, v)| v - vm - slope * (t - tm)).collect();
        EnergyTrace { times: self.times.clone(), values: residuals }.band()
    }

    /// True when the fitted linear change over the whole span exceeds the width
    /// of the oscillation around the fitted line.
    pub fn has_linear_drift(&self) -> bool {
        let span = match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => return false,
        };
        self.slope().abs() * span > self.detrended_band()
    }

    /// Writes `t,H` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,H")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(out, "{},{}", fmt_f64(*t), fmt_f64(*v))?;
        }
        Ok(())
    }
}

/// Evaluates `energy(q, q̇)` at every snapshot; times are `j·h`.
pub fn energy_trace(
    energy: impl Fn(&[f64], &[f64]) -> f64 + Sync,
    positions: &[Vec<f64>],
    velocities: Option<&[Vec<f64>]>,
    h: f64,
) -> Result<EnergyTrace> {
    let velocities = velocities.ok_or(Error::MissingVelocities)?;
    check_dim(positions.len(), velocities.len())?;
    let values: Vec<f64> = positions.par_iter().zip(velocities.par_iter()).map(|(q, v)| energy(q, v)).collect();
    let times = (0..positions.len()).map(|j| j as f64 * h).collect();
    Ok(EnergyTrace { times, values })
}

/// One axis of an evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridAxis {
    /// `count` equidistant nodes from `lo` to `hi` inclusive.
    Free {
        lo: f64,
        hi: f64,
        count: usize,
    },
    Fixed(f64),
}

impl GridAxis {
    fn nodes(&self) -> Vec<f64> {
        match *self {
            GridAxis::Free { lo, hi, count } => (0..count)
                .map(|i| if i + 1 == count { hi } else { lo + (hi - lo) * i as f64 / (count - 1) as f64 })
                .collect(),
            GridAxis::Fixed(v) => vec![v],
        }
    }
}

/// Tensor grid over `TQ`, one axis per coordinate `(q_1..q_n, q̇_1..q̇_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<GridAxis>,
}

impl GridSpec {
    pub fn new(axes: Vec<GridAxis>) -> Result<Self> {
        for axis in &axes {
            match *axis {
                GridAxis::Free { lo, hi, count } => {
                    if count < 2 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                        return Err(Error::InvalidSpec(format!(
                            "free grid axis needs lo < hi and at least 2 nodes, got [{lo}, {hi}] × {count}"
                        )));
                    }
                }
                GridAxis::Fixed(v) if !v.is_finite() => {
                    return Err(Error::InvalidSpec("fixed grid coordinate must be finite".into()));
                }
                GridAxis::Fixed(_) => {}
            }
        }
        if axes.is_empty() {
            return Err(Error::InvalidSpec("grid needs at least one axis".into()));
        }
        Ok(Self { axes })
    }

    /// `count × count` mesh over a box in every coordinate.
    pub fn mesh(lower: &[f64], upper: &[f64], count: usize) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        Self::new(lower.iter().zip(upper).map(|(&lo, &hi)| GridAxis::Free { lo, hi, count }).collect())
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn free_axes(&self) -> Vec<usize> {
        (0..self.axes.len()).filter(|&i| matches!(self.axes[i], GridAxis::Free { .. })).collect()
    }

    /// All nodes; the first axis varies fastest.
    pub fn nodes(&self) -> Vec<Vec<f64>> {
        let per_axis: Vec<Vec<f64>> = self.axes.iter().map(GridAxis::nodes).collect();
        let total: usize = per_axis.iter().map(Vec::len).product();
        (0..total)
            .map(|mut idx| {
                per_axis
                    .iter()
                    .map(|nodes| {
                        let v = nodes[idx % nodes.len()];
                        idx /= nodes.len();
                        v
                    })
                    .collect()
            })
            .collect()
    }
}

/// Result of [`nu_metric`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuResult {
    pub nu: f64,
    pub nodes: usize,
    /// Nodes where either gradient norm is below `1e-12`.
    pub skipped: usize,
}

/// Mean over grid nodes of the sine of the angle between `∇H_a` and `∇H_b`.
pub fn nu_metric<A: ScalarField + ?Sized, B: ScalarField + ?Sized>(a: &A, b: &B, grid: &GridSpec) -> Result<NuResult> {
    check_dim(grid.dim(), a.dim())?;
    check_dim(grid.dim(), b.dim())?;
    let nodes = grid.nodes();
    let per_node: Vec<Option<f64>> = nodes
        .par_iter()
        .map(|x| {
            let ga = a.gradient(x);
            let gb = b.gradient(x);
            let na = ga.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb = gb.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(na >= 1e-12 && nb >= 1e-12) {
                return None;
            }
            // sin θ = ‖â − b̂‖·‖â + b̂‖/2: exact zero for parallel gradients, no
            // cancellation at small angles.
            let (mut minus, mut plus) = (0.0, 0.0);
            for (p, q) in ga.iter().zip(&gb) {
                let (u, v) = (p / na, q / nb);
                minus += (u - v) * (u - v);
                plus += (u + v) * (u + v);
            }
            Some((minus.sqrt() * plus.sqrt() / 2.0).min(1.0))
        })
        .collect();
    let used: Vec<f64> = per_node.iter().flatten().copied().collect();
    let skipped = per_node.len() - used.len();
    if used.is_empty() {
        return Err(Error::InvalidSpec("every grid node has a vanishing gradient".into()));
    }
    let nu = used.iter().sum::<f64>() / used.len() as f64;
    Ok(NuResult { nu, nodes: per_node.len(), skipped })
}

/// Field values on a grid with at most two free axes.
///
/// `values[i][j]` is the value at `y[i]`, `x[j]`. With a single free axis `y` is empty
/// and there is exactly one row.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourGrid {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl ContourGrid {
    /// First row: x coordinates; first column: y coordinates.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = vec![String::new()];
        header.extend(self.x.iter().map(|&v| fmt_f64(v)));
        writeln!(out, "{}", header.join(","))?;
        for (i, row) in self.values.iter().enumerate() {
            let mut cells = vec![self.y.get(i).map_or(String::new(), |&v| fmt_f64(v))];
            cells.extend(row.iter().map(|&v| fmt_f64(v)));
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    /// Number of sign changes of `value − level` between neighbouring cells, rows plus columns.
    pub fn level_crossings(&self, level: f64) -> usize {
        let above = |v: f64| v > level;
        let mut count = 0;
        for row in &self.values {
            count += row.windows(2).filter(|w| above(w[0]) != above(w[1])).count();
        }
        for j in 0..self.x.len() {
            for i in 1..self.values.len() {
                if above(self.values[i - 1][j]) != above(self.values[i][j]) {
                    count += 1;
                }
            }
        }
        count
    }
}

pub fn contour_grid<F: ScalarField + ?Sized>(field: &F, grid: &GridSpec) -> Result<ContourGrid> {
    check_dim(grid.dim(), field.dim())?;
    let free = grid.free_axes();
    if free.is_empty() || free.len() > 2 {
        return Err(Error::TooManyFreeAxes(free.len()));
    }
    let x = grid.axes[free[0]].nodes();
    let y = free.get(1).map(|&i| grid.axes[i].nodes()).unwrap_or_default();
    let values_flat: Vec<f64> = grid.nodes().par_iter().map(|p| field.value(p)).collect();
    let values = values_flat.chunks(x.len()).map(<[f64]>::to_vec).collect();
    Ok(ContourGrid { x, y, values })
}

/// First time `j·h` with `‖q_j‖ > bound`.
pub fn divergence_time(positions: &[Vec<f64>], bound: f64, h: f64) -> Result<Option<f64>> {
    if !(bound > 0.0) {
        return Err(Error::InvalidSpec(format!("divergence bound must be positive, got {bound}")));
    }
    Ok(positions
        .iter()
        .position(|q| {
            let r = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            !(r <= bound)
        })
        .map(|j| j as f64 * h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::BenchmarkSystem;

    fn linear(
        dim: usize,
        coef: Vec<f64>,
    ) -> FnField<impl Fn(&[f64]) -> f64 + Sync, impl Fn(&[f64]) -> Vec<f64> + Sync> {
        let c2 = coef.clone();
        FnField {
            dim,
            value: move |x: &[f64]| x.iter().zip(&coef).map(|(a, b)| a * b).sum(),
            gradient: move |_: &[f64]| c2.clone(),
        }
    }

    #[test]
    fn nu_examples() {
        let grid = GridSpec::mesh(&[-1.0, -1.0], &[1.0, 1.0], 5).unwrap();
        let x = linear(2, vec![1.0, 0.0]);
        let y = linear(2, vec![0.0, 1.0]);
        assert_eq!(nu_metric(&x, &x, &grid).unwrap().nu, 0.0);
        assert!((nu_metric(&x, &y, &grid).unwrap().nu - 1.0).abs() < 1e-15);
        let h = Energy(BenchmarkSystem::Pendulum.lagrangian());
        let r = nu_metric(&h, &h, &grid).unwrap();
        assert_eq!(r.nu, 0.0);
        // (0, 0) is a critical point of the pendulum energy.
        assert_eq!(r.skipped, 1);
        assert_eq!(r.nodes, 25);

        let g = linear(2, vec![0.3, 0.7]);
        assert_eq!(nu_metric(&g, &g, &grid).unwrap().nu, 0.0);
        let t = std::f64::consts::FRAC_PI_6;
        let rotated = linear(2, vec![t.cos(), t.sin()]);
        assert!((nu_metric(&x, &rotated, &grid).unwrap().nu - 0.5).abs() < 1e-15);
    }

    #[test]
    fn grid_node_order_and_bounds() {
        let g = GridSpec::new(vec![GridAxis::Free { lo: 0.0, hi: 1.0, count: 3 }, GridAxis::Fixed(2.0)]).unwrap();
        assert_eq!(g.nodes(), vec![vec![0.0, 2.0], vec![0.5, 2.0], vec![1.0, 2.0]]);
        assert!(GridSpec::new(vec![GridAxis::Free { lo: 0.0, hi: 1.0, count: 1 }]).is_err());
        assert!(GridSpec::new(vec![GridAxis::Free { lo: 1.0, hi: 0.0, count: 3 }]).is_err());
    }

    #[test]
    fn pendulum_energy_contour() {
        let grid = GridSpec::mesh(&[-1.0, -1.0], &[1.0, 1.0], 3).unwrap();
        let h = Energy(BenchmarkSystem::Pendulum.lagrangian());
        let c = contour_grid(&h, &grid).unwrap();
        for (i, y) in [-1.0f64, 0.0, 1.0].iter().enumerate() {
            for (j, x) in [-1.0f64, 0.0, 1.0].iter().enumerate() {
                assert!((c.values[i][j] - (0.5 * y * y - x.cos())).abs() < 1e-15);
            }
        }
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first: Vec<&str> = text.lines().next().unwrap().split(',').collect();
        assert_eq!(first.len(), 4);
        assert_eq!(first[0], "");
    }

    #[test]
    fn contour_rejects_three_free_axes() {
        let grid = GridSpec::mesh(&[0.0; 3], &[1.0; 3], 2).unwrap();
        let f = linear(3, vec![1.0, 1.0, 1.0]);
        assert!(matches!(contour_grid(&f, &grid), Err(Error::TooManyFreeAxes(3))));
    }

    #[test]
    fn divergence_examples() {
        let bounded: Vec<Vec<f64>> = (0..100).map(|j| vec![(j as f64).sin(), 0.0]).collect();
        assert_eq!(divergence_time(&bounded, 2.0, 0.1).unwrap(), None);
        let ramp: Vec<Vec<f64>> = (0..30).map(|j| vec![j as f64 * 0.1, 0.0]).collect();
        let t = divergence_time(&ramp, 1.0, 0.1).unwrap().unwrap();
        assert!((t - 1.1).abs() < 1e-12);
        assert!(divergence_time(&ramp, 0.0, 0.1).is_err());
    }

    #[test]
    fn energy_trace_band_and_drift() {
        let l = BenchmarkSystem::Pendulum.lagrangian();
        let pos = vec![vec![0.0]; 10];
        let vel = vec![vec![0.0]; 10];
        let tr = energy_trace(|q, v| l.energy(q, v), &pos, Some(&vel), 0.5).unwrap();
        assert!(tr.values.iter().all(|&v| v == -1.0));
        assert_eq!(tr.band(), 0.0);
        assert!(!tr.has_linear_drift());
        assert!(matches!(energy_trace(|q, v| l.energy(q, v), &pos, None, 0.5), Err(Error::MissingVelocities)));
        let drift = EnergyTrace {
            times: (0..100).map(f64::from).collect(),
            values: (0..100).map(|j| 1e-3 * j as f64 + 1e-3 * (j as f64).sin()).collect(),
        };
        assert!(drift.has_linear_drift());
        let osc = EnergyTrace {
            times: (0..200).map(f64::from).collect(),
            values: (0..200).map(|j| (j as f64 * 0.7).sin()).collect(),
        };
        assert!(!osc.has_linear_drift());
    }
}
