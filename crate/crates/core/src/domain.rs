//! State and trajectory types and the two analytic benchmark systems.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::field::{Jet, LagrangianField, Taylor4};

/// A point of the motion, optionally with velocity and acceleration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub q: Vec<f64>,
    pub qdot: Option<Vec<f64>>,
    pub qddot: Option<Vec<f64>>,
}

impl State {
    pub fn new(q: Vec<f64>, qdot: Option<Vec<f64>>, qddot: Option<Vec<f64>>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::InvalidSpec("state dimension must be at least 1".into()));
        }
        for v in qdot.iter().chain(qddot.iter()) {
            check_dim(q.len(), v.len())?;
        }
        Ok(Self { q, qdot, qddot })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }
}

/// Equally spaced position snapshots `q_0, q_1, …` with step `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub positions: Vec<Vec<f64>>,
    pub h: f64,
}

impl Trajectory {
    pub fn new(positions: Vec<Vec<f64>>, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidSpec(format!("step size must be positive, got {h}")));
        }
        if positions.len() < 2 {
            return Err(Error::TrajectoryTooShort { len: positions.len(), min: 2 });
        }
        let n = positions[0].len();
        if n == 0 {
            return Err(Error::InvalidSpec("position dimension must be at least 1".into()));
        }
        for p in &positions {
            check_dim(n, p.len())?;
        }
        Ok(Self { positions, h })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.positions[0].len()
    }

    /// Consecutive pairs `(q_j, q_{j+1})`.
    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.positions.windows(2).map(|w| (w[0].as_slice(), w[1].as_slice()))
    }

    /// Consecutive triples `(q_{j-1}, q_j, q_{j+1})`.
    pub fn triples(&self) -> impl Iterator<Item = (&[f64], &[f64], &[f64])> {
        self.positions.windows(3).map(|w| (w[0].as_slice(), w[1].as_slice(), w[2].as_slice()))
    }
}

/// Axis-aligned box `[lower_i, upper_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidSpec("bounds must have at least one coordinate".into()));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) {
                return Err(Error::InvalidSpec(format!("bounds coordinate {i}: lower {lo} must be below upper {hi}")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Same interval `[lo, hi]` on every one of `dim` coordinates.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Maps a point of the unit cube affinely into the box.
    pub fn scale(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter().zip(self.lower.iter().zip(&self.upper)).map(|(u, (lo, hi))| lo + u * (hi - lo)).collect()
    }
}

/// Position-only training data with shared step size and dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub n: usize,
    pub h: f64,
    /// Sampling box over `(q, qdot)`.
    pub domain: Bounds,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectoryDataset {
    pub fn new(n: usize, h: f64, domain: Bounds, trajectories: Vec<Trajectory>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSpec("dimension must be at least 1".into()));
        }
        if !(h > 0.0) {
            return Err(Error::InvalidSpec(format!("step size must be positive, got {h}")));
        }
        check_dim(2 * n, domain.dim())?;
        for t in &trajectories {
            check_dim(n, t.dim())?;
            if t.h != h {
                return Err(Error::InvalidSpec(format!("trajectory step {} differs from dataset step {h}", t.h)));
            }
        }
        Ok(Self { n, h, domain, trajectories })
    }

    /// Number of interior triples `K = Σ (len − 2)`.
    pub fn triple_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.len().saturating_sub(2)).sum()
    }

    pub fn pair_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.len() - 1).sum()
    }

    pub fn position_count(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn triples(&self) -> impl Iterator<Item = (&[f64], &[f64], &[f64])> {
        self.trajectories.iter().flat_map(Trajectory::triples)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.trajectories.iter().flat_map(Trajectory::pairs)
    }

    /// Serialises to the dataset document `{n, h, domain, trajectories}`.
    pub fn to_json(&self) -> Result<String> {
        let doc = DatasetDocument {
            n: self.n,
            h: self.h,
            domain: self.domain.clone(),
            trajectories: self.trajectories.iter().map(|t| t.positions.clone()).collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DatasetDocument = serde_json::from_str(text)?;
        let trajectories =
            doc.trajectories.into_iter().map(|p| Trajectory::new(p, doc.h)).collect::<Result<Vec<_>>>()?;
        Self::new(doc.n, doc.h, Bounds::new(doc.domain.lower, doc.domain.upper)?, trajectories)
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetDocument {
    n: usize,
    h: f64,
    domain: Bounds,
    trajectories: Vec<Vec<Vec<f64>>>,
}

/// Analytic reference systems with `L = ½‖qdot‖² − V(q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BenchmarkSystem {
    /// `V(q) = −cos q`, `n = 1`.
    Pendulum,
    /// `V(q) = ½‖q‖² + α (q₁² q₂ − q₂³/3)`, `n = 2`.
    HenonHeiles { alpha: f64 },
}

impl BenchmarkSystem {
    pub fn henon_heiles(alpha: f64) -> Result<Self> {
        if alpha == 0.0 || !alpha.is_finite() {
            return Err(Error::InvalidSpec(format!("Hénon–Heiles alpha must be nonzero, got {alpha}")));
        }
        Ok(Self::HenonHeiles { alpha })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Pendulum => 1,
            Self::HenonHeiles { .. } => 2,
        }
    }

    fn check(&self, q: &[f64], qdot: &[f64]) -> Result<()> {
        check_dim(self.dim(), q.len())?;
        check_dim(self.dim(), qdot.len())
    }

    pub fn potential(&self, q: &[f64]) -> f64 {
        match *self {
            Self::Pendulum => -q[0].cos(),
            Self::HenonHeiles { alpha } => {
                let (x, y) = (q[0], q[1]);
                0.5 * (x * x + y * y) + alpha * (x * x * y - y * y * y / 3.0)
            }
        }
    }

    pub fn potential_gradient(&self, q: &[f64]) -> Vec<f64> {
        match *self {
            Self::Pendulum => vec![q[0].sin()],
            Self::HenonHeiles { alpha } => {
                let (x, y) = (q[0], q[1]);
                vec![x + 2.0 * alpha * x * y, y + alpha * (x * x - y * y)]
            }
        }
    }

    /// Row-major Hessian of the potential.
    pub fn potential_hessian(&self, q: &[f64]) -> Vec<f64> {
        match *self {
            Self::Pendulum => vec![q[0].cos()],
            Self::HenonHeiles { alpha } => {
                let (x, y) = (q[0], q[1]);
                let off = 2.0 * alpha * x;
                vec![1.0 + 2.0 * alpha * y, off, off, 1.0 - 2.0 * alpha * y]
            }
        }
    }

    /// Velocity-independent acceleration `−∇V(q)`.
    pub fn force(&self, q: &[f64]) -> Vec<f64> {
        self.potential_gradient(q).into_iter().map(|g| -g).collect()
    }

    pub fn reference_lagrangian(&self, q: &[f64], qdot: &[f64]) -> Result<f64> {
        self.check(q, qdot)?;
        Ok(kinetic(qdot) - self.potential(q))
    }

    pub fn reference_energy(&self, q: &[f64], qdot: &[f64]) -> Result<f64> {
        self.check(q, qdot)?;
        Ok(kinetic(qdot) + self.potential(q))
    }

    pub fn reference_acceleration(&self, q: &[f64], qdot: &[f64]) -> Result<Vec<f64>> {
        self.check(q, qdot)?;
        Ok(self.force(q))
    }

    /// Critical value of the potential bounding the trapped region (Hénon–Heiles only).
    pub fn escape_energy(&self) -> Option<f64> {
        match *self {
            Self::Pendulum => None,
            Self::HenonHeiles { alpha } => Some(1.0 / (6.0 * alpha * alpha)),
        }
    }

    /// The reference Lagrangian as a field with analytic derivatives.
    pub fn lagrangian(self) -> ReferenceLagrangian {
        ReferenceLagrangian(self)
    }
}

impl fmt::Display for BenchmarkSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Pendulum => write!(f, "pendulum"),
            Self::HenonHeiles { alpha } => write!(f, "henon-heiles(alpha={alpha})"),
        }
    }
}

/// System kind without parameters, as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    Pendulum,
    HenonHeiles,
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum" => Ok(Self::Pendulum),
            "henon-heiles" => Ok(Self::HenonHeiles),
            other => Err(Error::InvalidSpec(format!("unknown system `{other}`"))),
        }
    }
}

fn kinetic(qdot: &[f64]) -> f64 {
    0.5 * qdot.iter().map(|v| v * v).sum::<f64>()
}

/// [`LagrangianField`] view of a benchmark's reference Lagrangian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceLagrangian(pub BenchmarkSystem);

impl LagrangianField for ReferenceLagrangian {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn value(&self, q: &[f64], qdot: &[f64]) -> f64 {
        kinetic(qdot) - self.0.potential(q)
    }

    fn jet(&self, q: &[f64], qdot: &[f64]) -> Jet {
        let n = self.dim();
        let mut jet = Jet::zeros(n);
        jet.value = self.value(q, qdot);
        let grad = self.0.potential_gradient(q);
        let hess = self.0.potential_hessian(q);
        for a in 0..n {
            jet.dq[a] = -grad[a];
            jet.dv[a] = qdot[a];
            jet.dvv[(a, a)] = 1.0;
            for b in 0..n {
                jet.dqq[(a, b)] = -hess[a * n + b];
            }
        }
        jet
    }

    fn taylor4(&self, q: &[f64], qdot: &[f64]) -> Option<Taylor4> {
        let n = self.dim();
        let mut t = Taylor4::zeros(2 * n);
        t.set(&[], self.value(q, qdot));
        let grad = self.0.potential_gradient(q);
        let hess = self.0.potential_hessian(q);
        for a in 0..n {
            t.set(&[a], -grad[a]);
            t.set(&[n + a], qdot[a]);
            t.set(&[n + a, n + a], 1.0);
            for b in a..n {
                t.set(&[a, b], -hess[a * n + b]);
            }
        }
        match self.0 {
            BenchmarkSystem::Pendulum => {
                t.set(&[0, 0, 0], q[0].sin());
                t.set(&[0, 0, 0, 0], q[0].cos());
            }
            BenchmarkSystem::HenonHeiles { alpha } => {
                t.set(&[0, 0, 1], -2.0 * alpha);
                t.set(&[1, 1, 1], 2.0 * alpha);
            }
        }
        Some(t)
    }

    fn has_taylor4(&self) -> bool {
        true
    }
}
