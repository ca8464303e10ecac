//! Scalar fields on the tangent space `TQ ≅ R^{2n}`.
//!
//! Points of `TQ` are written `(q, qdot)`; when a single flat coordinate
//! vector is needed the ordering is `(q_1..q_n, qdot_1..qdot_n)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

/// Value and partial derivatives up to second order of a Lagrangian at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    /// `∂L/∂q`
    pub dq: DVector<f64>,
    /// `∂L/∂qdot`
    pub dv: DVector<f64>,
    /// `∂²L/∂q^a∂q^b`
    pub dqq: DMatrix<f64>,
    /// Entry `(a, b)` is `∂²L/∂qdot^a∂q^b`.
    pub dvq: DMatrix<f64>,
    /// `∂²L/∂qdot^a∂qdot^b`
    pub dvv: DMatrix<f64>,
}

impl Jet {
    pub fn zeros(n: usize) -> Self {
        Self {
            value: 0.0,
            dq: DVector::zeros(n),
            dv: DVector::zeros(n),
            dqq: DMatrix::zeros(n, n),
            dvq: DMatrix::zeros(n, n),
            dvv: DMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.dq.len()
    }

    /// Builds a jet from a gradient and Hessian in flat `(q, qdot)` coordinates.
    pub fn from_flat(value: f64, grad: &[f64], hess: &DMatrix<f64>) -> Self {
        let n = grad.len() / 2;
        Self {
            value,
            dq: DVector::from_column_slice(&grad[..n]),
            dv: DVector::from_column_slice(&grad[n..]),
            dqq: hess.view((0, 0), (n, n)).into_owned(),
            dvq: hess.view((n, 0), (n, n)).into_owned(),
            dvv: hess.view((n, n), (n, n)).into_owned(),
        }
    }

    /// Energy `qdot · ∂L/∂qdot − L` at the jet's point.
    pub fn energy(&self, qdot: &[f64]) -> f64 {
        self.dv.iter().zip(qdot).map(|(p, v)| p * v).sum::<f64>() - self.value
    }

    /// Gradient of the energy with respect to `(q, qdot)`.
    ///
    /// `∂H/∂q^b = Σ_a qdot^a ∂²L/∂qdot^a∂q^b − ∂L/∂q^b` and
    /// `∂H/∂qdot^b = Σ_a qdot^a ∂²L/∂qdot^a∂qdot^b`.
    pub fn energy_gradient(&self, qdot: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let v = DVector::from_column_slice(qdot);
        let gq = self.dvq.tr_mul(&v) - &self.dq;
        let gv = self.dvv.tr_mul(&v);
        let mut out = Vec::with_capacity(2 * n);
        out.extend(gq.iter());
        out.extend(gv.iter());
        out
    }
}

/// Evaluation contract shared by analytic benchmarks, learned kernel models and
/// corrected fields.
pub trait LagrangianField: Send + Sync {
    /// Configuration-space dimension `n`.
    fn dim(&self) -> usize;

    fn value(&self, q: &[f64], qdot: &[f64]) -> f64;

    /// Value and all partials up to second order. The default uses central
    /// finite differences of [`LagrangianField::value`].
    fn jet(&self, q: &[f64], qdot: &[f64]) -> Jet {
        let n = self.dim();
        finite_difference_jet(q, qdot, |x| self.value(&x[..n], &x[n..]))
    }

    /// Value with first partials `(L, ∂L/∂q, ∂L/∂qdot)`. Defaults to [`LagrangianField::jet`].
    fn first_partials(&self, q: &[f64], qdot: &[f64]) -> (f64, DVector<f64>, DVector<f64>) {
        let jet = self.jet(q, qdot);
        (jet.value, jet.dq, jet.dv)
    }

    /// Whether [`LagrangianField::jet`] is exact rather than finite-difference based.
    fn analytic_derivatives(&self) -> bool {
        true
    }

    /// Energy `qdot · ∂L/∂qdot − L`.
    fn energy(&self, q: &[f64], qdot: &[f64]) -> f64 {
        let (value, _, dv) = self.first_partials(q, qdot);
        dv.iter().zip(qdot).map(|(p, v)| p * v).sum::<f64>() - value
    }

    /// Exact partials up to fourth order, when the field can provide them.
    /// Corrected fields use them to differentiate their correction exactly.
    fn taylor4(&self, _q: &[f64], _qdot: &[f64]) -> Option<Taylor4> {
        None
    }

    /// Whether [`LagrangianField::taylor4`] returns `Some`.
    fn has_taylor4(&self) -> bool {
        false
    }
}

impl<F: LagrangianField + ?Sized> LagrangianField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, q: &[f64], qdot: &[f64]) -> f64 {
        (**self).value(q, qdot)
    }
    fn jet(&self, q: &[f64], qdot: &[f64]) -> Jet {
        (**self).jet(q, qdot)
    }
    fn first_partials(&self, q: &[f64], qdot: &[f64]) -> (f64, DVector<f64>, DVector<f64>) {
        (**self).first_partials(q, qdot)
    }
    fn analytic_derivatives(&self) -> bool {
        (**self).analytic_derivatives()
    }
    fn energy(&self, q: &[f64], qdot: &[f64]) -> f64 {
        (**self).energy(q, qdot)
    }
    fn taylor4(&self, q: &[f64], qdot: &[f64]) -> Option<Taylor4> {
        (**self).taylor4(q, qdot)
    }
    fn has_taylor4(&self) -> bool {
        (**self).has_taylor4()
    }
}

impl<F: LagrangianField + ?Sized> LagrangianField for Box<F> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, q: &[f64], qdot: &[f64]) -> f64 {
        (**self).value(q, qdot)
    }
    fn jet(&self, q: &[f64], qdot: &[f64]) -> Jet {
        (**self).jet(q, qdot)
    }
    fn first_partials(&self, q: &[f64], qdot: &[f64]) -> (f64, DVector<f64>, DVector<f64>) {
        (**self).first_partials(q, qdot)
    }
    fn analytic_derivatives(&self) -> bool {
        (**self).analytic_derivatives()
    }
    fn energy(&self, q: &[f64], qdot: &[f64]) -> f64 {
        (**self).energy(q, qdot)
    }
    fn taylor4(&self, q: &[f64], qdot: &[f64]) -> Option<Taylor4> {
        (**self).taylor4(q, qdot)
    }
    fn has_taylor4(&self) -> bool {
        (**self).has_taylor4()
    }
}

impl<F: LagrangianField + ?Sized> LagrangianField for Arc<F> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, q: &[f64], qdot: &[f64]) -> f64 {
        (**self).value(q, qdot)
    }
    fn jet(&self, q: &[f64], qdot: &[f64]) -> Jet {
        (**self).jet(q, qdot)
    }
    fn first_partials(&self, q: &[f64], qdot: &[f64]) -> (f64, DVector<f64>, DVector<f64>) {
        (**self).first_partials(q, qdot)
    }
    fn analytic_derivatives(&self) -> bool {
        (**self).analytic_derivatives()
    }
    fn energy(&self, q: &[f64], qdot: &[f64]) -> f64 {
        (**self).energy(q, qdot)
    }
    fn taylor4(&self, q: &[f64], qdot: &[f64]) -> Option<Taylor4> {
        (**self).taylor4(q, qdot)
    }
    fn has_taylor4(&self) -> bool {
        (**self).has_taylor4()
    }
}

/// Partial derivatives of orders 0 to 4 at one point of `R^d`, stored as dense
/// symmetric tensors in flat `(q, qdot)` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Taylor4 {
    pub dim: usize,
    /// `tensors[m]` has `dim^m` entries, row-major.
    pub tensors: [Vec<f64>; 5],
}

impl Taylor4 {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, tensors: std::array::from_fn(|m| vec![0.0; dim.pow(m as u32)]) }
    }

    pub(crate) fn offset(&self, index: &[usize]) -> usize {
        index.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    /// The partial derivative for the coordinate list `index` (length ≤ 4).
    pub fn get(&self, index: &[usize]) -> f64 {
        self.tensors[index.len()][self.offset(index)]
    }

    /// Sets the partial for `index` and every permutation of it.
    pub fn set(&mut self, index: &[usize], value: f64) {
        let mut sorted = index.to_vec();
        sorted.sort_unstable();
        let off = self.offset(&sorted);
        self.tensors[index.len()][off] = value;
        self.symmetrize_entry(&sorted);
    }

    fn symmetrize_entry(&mut self, sorted: &[usize]) {
        let m = sorted.len();
        let value = self.tensors[m][self.offset(sorted)];
        let mut perm = sorted.to_vec();
        // Visit all permutations of the (sorted) multiset in lexicographic order.
        loop {
            let off = self.offset(&perm);
            self.tensors[m][off] = value;
            let Some(i) = (1..m).rev().find(|&i| perm[i - 1] < perm[i]) else { break };
            let j = (i..m).rev().find(|&j| perm[j] > perm[i - 1]).expect("exists");
            perm.swap(i - 1, j);
            perm[i..].reverse();
        }
    }

    /// Non-decreasing coordinate lists of every order, `[]` first.
    pub fn sorted_indices(dim: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        let mut frontier = vec![Vec::new()];
        for _ in 0..4 {
            let mut next = Vec::new();
            for idx in &frontier {
                let start = idx.last().copied().unwrap_or(0);
                for i in start..dim {
                    let mut e: Vec<usize> = idx.clone();
                    e.push(i);
                    next.push(e);
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out
    }

    /// Copies every entry stored at a sorted index to all its permutations.
    pub fn symmetrize(&mut self) {
        for idx in Self::sorted_indices(self.dim) {
            self.symmetrize_entry(&idx);
        }
    }

    /// The second-order part as a [`Jet`].
    pub fn jet(&self) -> Jet {
        let d = self.dim;
        Jet::from_flat(self.tensors[0][0], &self.tensors[1], &DMatrix::from_row_slice(d, d, &self.tensors[2]))
    }
}

/// Relative finite-difference step used for fields without analytic derivatives.
pub const FD_STEP: f64 = 1e-5;

fn fd_step(x: f64) -> f64 {
    FD_STEP * x.abs().max(1.0)
}

/// Central finite-difference gradient and Hessian of `f` at the flat point `x`.
pub fn finite_difference_derivatives(x: &[f64], f: impl Fn(&[f64]) -> f64) -> (f64, Vec<f64>, DMatrix<f64>) {
    let d = x.len();
    let f0 = f(x);
    let mut grad = vec![0.0; d];
    let mut hess = DMatrix::zeros(d, d);
    let mut p = x.to_vec();
    let steps: Vec<f64> = x.iter().map(|&xi| fd_step(xi)).collect();
    let mut plus = vec![0.0; d];
    let mut minus = vec![0.0; d];
    for a in 0..d {
        p[a] = x[a] + steps[a];
        plus[a] = f(&p);
        p[a] = x[a] - steps[a];
        minus[a] = f(&p);
        p[a] = x[a];
        grad[a] = (plus[a] - minus[a]) / (2.0 * steps[a]);
        hess[(a, a)] = (plus[a] - 2.0 * f0 + minus[a]) / (steps[a] * steps[a]);
    }
    for a in 0..d {
        for b in (a + 1)..d {
            let mut corner = |sa: f64, sb: f64| {
                p[a] = x[a] + sa * steps[a];
                p[b] = x[b] + sb * steps[b];
                let v = f(&p);
                p[a] = x[a];
                p[b] = x[b];
                v
            };
            let pp = corner(1.0, 1.0);
            let pm = corner(1.0, -1.0);
            let mp = corner(-1.0, 1.0);
            let mm = corner(-1.0, -1.0);
            let v = (pp - pm - mp + mm) / (4.0 * steps[a] * steps[b]);
            hess[(a, b)] = v;
            hess[(b, a)] = v;
        }
    }
    (f0, grad, hess)
}

/// Finite-difference [`Jet`] of a scalar function of the flat `(q, qdot)` point.
pub fn finite_difference_jet(q: &[f64], qdot: &[f64], f: impl Fn(&[f64]) -> f64) -> Jet {
    let mut x = Vec::with_capacity(q.len() + qdot.len());
    x.extend_from_slice(q);
    x.extend_from_slice(qdot);
    let (value, grad, hess) = finite_difference_derivatives(&x, f);
    Jet::from_flat(value, &grad, &hess)
}

/// `L = ½ m ‖qdot‖² − ½ k ‖q‖²`. With `stiffness = 0` this is the free particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticLagrangian {
    pub n: usize,
    pub mass: f64,
    pub stiffness: f64,
}

impl QuadraticLagrangian {
    pub fn free_particle(n: usize) -> Self {
        Self { n, mass: 1.0, stiffness: 0.0 }
    }

    pub fn harmonic(n: usize, mass: f64, stiffness: f64) -> Self {
        Self { n, mass, stiffness }
    }
}

impl LagrangianField for QuadraticLagrangian {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, q: &[f64], qdot: &[f64]) -> f64 {
        let kin: f64 = qdot.iter().map(|v| v * v).sum();
        let pot: f64 = q.iter().map(|x| x * x).sum();
        0.5 * self.mass * kin - 0.5 * self.stiffness * pot
    }

    fn jet(&self, q: &[f64], qdot: &[f64]) -> Jet {
        let n = self.n;
        let mut jet = Jet::zeros(n);
        jet.value = self.value(q, qdot);
        for a in 0..n {
            jet.dq[a] = -self.stiffness * q[a];
            jet.dv[a] = self.mass * qdot[a];
            jet.dqq[(a, a)] = -self.stiffness;
            jet.dvv[(a, a)] = self.mass;
        }
        jet
    }

    fn taylor4(&self, q: &[f64], qdot: &[f64]) -> Option<Taylor4> {
        let n = self.n;
        let mut t = Taylor4::zeros(2 * n);
        t.set(&[], self.value(q, qdot));
        for a in 0..n {
            t.set(&[a], -self.stiffness * q[a]);
            t.set(&[n + a], self.mass * qdot[a]);
            t.set(&[a, a], -self.stiffness);
            t.set(&[n + a, n + a], self.mass);
        }
        Some(t)
    }

    fn has_taylor4(&self) -> bool {
        true
    }
}

/// A Lagrangian that is constant everywhere; its Euler–Lagrange equations are trivial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantLagrangian {
    pub n: usize,
    pub value: f64,
}

impl LagrangianField for ConstantLagrangian {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, _q: &[f64], _qdot: &[f64]) -> f64 {
        self.value
    }

    fn jet(&self, _q: &[f64], _qdot: &[f64]) -> Jet {
        let mut jet = Jet::zeros(self.n);
        jet.value = self.value;
        jet
    }
}
