//! Variational discretisation and time stepping.
//!
//! A discrete Lagrangian `L_Δ(q0, q1)` approximates the action over one step.
//! Motions satisfy the discrete Euler–Lagrange equations
//! `∇₂L_Δ(q_{j−1}, q_j) + ∇₁L_Δ(q_j, q_{j+1}) = 0`, which [`step`] solves for
//! `q_{j+1}` with Newton's method.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::field::LagrangianField;

/// Quadrature rule used to build `L_Δ` from a continuous Lagrangian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `h L((q0+q1)/2, (q1−q0)/h)`
    Midpoint,
    /// `h/2 L(q0, (q1−q0)/h) + h/2 L(q1, (q1−q0)/h)`
    Trapezoidal,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Midpoint => "midpoint",
            Self::Trapezoidal => "trapezoidal",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "midpoint" => Ok(Self::Midpoint),
            "trapezoidal" => Ok(Self::Trapezoidal),
            other => Err(Error::InvalidSpec(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Which argument of `L_Δ(q0, q1)` to differentiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    First,
    Second,
}

/// One evaluation of the continuous Lagrangian inside a discrete gradient.
///
/// The slot gradient is `Σ_terms coef_q ∂L/∂q(x) + coef_v ∂L/∂qdot(x)` where
/// `x = (position, velocity)`. `dpos_dq0`/`dpos_dq1` are the derivatives of
/// `position` with respect to the pair's endpoints; the velocity is always the
/// difference quotient `(q1 − q0)/h`.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilTerm {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub coef_q: f64,
    pub coef_v: f64,
    pub dpos_dq0: f64,
    pub dpos_dq1: f64,
}

impl Scheme {
    /// Evaluation points `(position, velocity)` of `L_Δ(q0, q1)` with their quadrature weights.
    pub fn quadrature_points(&self, q0: &[f64], q1: &[f64], h: f64) -> Vec<(Vec<f64>, Vec<f64>, f64)> {
        let v = difference_quotient(q0, q1, h);
        match self {
            Self::Midpoint => vec![(midpoint(q0, q1), v, h)],
            Self::Trapezoidal => vec![(q0.to_vec(), v.clone(), 0.5 * h), (q1.to_vec(), v, 0.5 * h)],
        }
    }

    /// Chain-rule expansion of `∇₁L_Δ(q0, q1)` or `∇₂L_Δ(q0, q1)`.
    pub fn stencil(&self, q0: &[f64], q1: &[f64], h: f64, slot: Slot) -> Vec<StencilTerm> {
        let v = difference_quotient(q0, q1, h);
        let sign = match slot {
            Slot::First => -1.0,
            Slot::Second => 1.0,
        };
        match self {
            Self::Midpoint => vec![StencilTerm {
                position: midpoint(q0, q1),
                velocity: v,
                coef_q: 0.5 * h,
                coef_v: sign,
                dpos_dq0: 0.5,
                dpos_dq1: 0.5,
            }],
            Self::Trapezoidal => {
                let (wq0, wq1) = match slot {
                    Slot::First => (0.5 * h, 0.0),
                    Slot::Second => (0.0, 0.5 * h),
                };
                vec![
                    StencilTerm {
                        position: q0.to_vec(),
                        velocity: v.clone(),
                        coef_q: wq0,
                        coef_v: 0.5 * sign,
                        dpos_dq0: 1.0,
                        dpos_dq1: 0.0,
                    },
                    StencilTerm {
                        position: q1.to_vec(),
                        velocity: v,
                        coef_q: wq1,
                        coef_v: 0.5 * sign,
                        dpos_dq0: 0.0,
                        dpos_dq1: 1.0,
                    },
                ]
            }
        }
    }
}

pub(crate) fn midpoint(q0: &[f64], q1: &[f64]) -> Vec<f64> {
    q0.iter().zip(q1).map(|(a, b)| 0.5 * (a + b)).collect()
}

pub(crate) fn difference_quotient(q0: &[f64], q1: &[f64], h: f64) -> Vec<f64> {
    q0.iter().zip(q1).map(|(a, b)| (b - a) / h).collect()
}

fn check_step(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("step size must be positive, got {h}")))
    }
}

fn check_pair<L: LagrangianField + ?Sized>(field: &L, q0: &[f64], q1: &[f64], h: f64) -> Result<()> {
    check_step(h)?;
    check_dim(field.dim(), q0.len())?;
    check_dim(field.dim(), q1.len())
}

/// `L_Δ(q0, q1)` for the given scheme.
pub fn discrete_lagrangian<L: LagrangianField + ?Sized>(
    field: &L,
    scheme: Scheme,
    q0: &[f64],
    q1: &[f64],
    h: f64,
) -> Result<f64> {
    check_pair(field, q0, q1, h)?;
    Ok(scheme.quadrature_points(q0, q1, h).iter().map(|(x, v, w)| w * field.value(x, v)).sum())
}

fn slot_gradient<L: LagrangianField + ?Sized>(
    field: &L,
    scheme: Scheme,
    q0: &[f64],
    q1: &[f64],
    h: f64,
    slot: Slot,
) -> DVector<f64> {
    let mut out = DVector::zeros(q0.len());
    for term in scheme.stencil(q0, q1, h, slot) {
        let (_, dq, dv) = field.first_partials(&term.position, &term.velocity);
        if term.coef_q != 0.0 {
            out.axpy(term.coef_q, &dq, 1.0);
        }
        out.axpy(term.coef_v, &dv, 1.0);
    }
    out
}

/// `∇₁L_Δ(q0, q1)` or `∇₂L_Δ(q0, q1)`.
pub fn grad_discrete_lagrangian<L: LagrangianField + ?Sized>(
    field: &L,
    scheme: Scheme,
    q0: &[f64],
    q1: &[f64],
    h: f64,
    slot: Slot,
) -> Result<DVector<f64>> {
    check_pair(field, q0, q1, h)?;
    Ok(slot_gradient(field, scheme, q0, q1, h, slot))
}

/// Derivative of `∇₁L_Δ(q0, q1)` with respect to `q1`, assembled from the field's
/// second partials.
fn first_slot_jacobian<L: LagrangianField + ?Sized>(
    field: &L,
    scheme: Scheme,
    q0: &[f64],
    q1: &[f64],
    h: f64,
) -> DMatrix<f64> {
    let n = q0.len();
    let mut jac = DMatrix::zeros(n, n);
    for term in scheme.stencil(q0, q1, h, Slot::First) {
        let jet = field.jet(&term.position, &term.velocity);
        let alpha = term.dpos_dq1;
        if term.coef_q != 0.0 {
            // ∂(∂L/∂q^a)/∂q1^b = α L_qq[a,b] + L_{q^a v^b}/h
            jac += (&jet.dqq * alpha + jet.dvq.transpose() / h) * term.coef_q;
        }
        jac += (&jet.dvq * alpha + &jet.dvv / h) * term.coef_v;
    }
    jac
}

fn finite_difference_jacobian(x: &[f64], f: &dyn Fn(&[f64]) -> DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut p = x.to_vec();
    for b in 0..n {
        let step = 1e-6 * x[b].abs().max(1.0);
        p[b] = x[b] + step;
        let fp = f(&p);
        p[b] = x[b] - step;
        let fm = f(&p);
        p[b] = x[b];
        jac.set_column(b, &((fp - fm) / (2.0 * step)));
    }
    jac
}

/// `∇₂L_Δ(q_prev, q) + ∇₁L_Δ(q, q_next)`.
pub fn del_residual<L: LagrangianField + ?Sized>(
    field: &L,
    scheme: Scheme,
    q_prev: &[f64],
    q: &[f64],
    q_next: &[f64],
    h: f64,
) -> Result<DVector<f64>> {
    check_pair(field, q_prev, q, h)?;
    check_dim(field.dim(), q_next.len())?;
    Ok(slot_gradient(field, scheme, q_prev, q, h, Slot::Second)
        + slot_gradient(field, scheme, q, q_next, h, Slot::First))
}

/// Discrete conjugate momentum `p = ∇₂L_Δ(q_prev, q)`.
pub fn discrete_momentum<L: LagrangianField + ?Sized>(
    field: &L,
    scheme: Scheme,
    q_prev: &[f64],
    q: &[f64],
    h: f64,
) -> Result<DVector<f64>> {
    grad_discrete_lagrangian(field, scheme, q_prev, q, h, Slot::Second)
}

/// Newton iteration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Tolerance on the Euclidean norm of the residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Rounding can stall the residual above `tol` (large kernel coefficients,
    /// finite-difference derivatives). Once the residual stops halving and its
    /// best value lies below `stall_tol`, that iterate is accepted.
    #[serde(default = "default_stall_tol")]
    pub stall_tol: f64,
}

fn default_stall_tol() -> f64 {
    1e-9
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 50, stall_tol: default_stall_tol() }
    }
}

/// Result of a converged Newton solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
}

/// Newton's method; see [`NewtonOptions::stall_tol`] for the stall rule.
fn newton(
    guess: Vec<f64>,
    opts: &NewtonOptions,
    residual: impl Fn(&[f64]) -> DVector<f64>,
    jacobian: impl Fn(&[f64]) -> DMatrix<f64>,
) -> Result<NewtonSolution> {
    let mut x = guess;
    let mut iterations = 0;
    let mut best: Option<(Vec<f64>, f64)> = None;
    loop {
        let r = residual(&x);
        let norm = r.norm();
        if !norm.is_finite() {
            return Err(Error::NonConvergence { iterations, residual_norm: norm });
        }
        if norm <= opts.tol {
            return Ok(NewtonSolution { x, iterations, residual_norm: norm });
        }
        let stalled = best.as_ref().is_some_and(|(_, b)| norm > 0.5 * b) || iterations == opts.max_iter;
        if best.as_ref().is_none_or(|(_, b)| norm < *b) {
            best = Some((x.clone(), norm));
        }
        if stalled && best.as_ref().is_some_and(|(_, b)| *b <= opts.stall_tol) {
            let (x, residual_norm) = best.expect("checked above");
            return Ok(NewtonSolution { x, iterations, residual_norm });
        }
        if iterations == opts.max_iter {
            return Err(Error::NonConvergence { iterations, residual_norm: norm });
        }
        let jac = jacobian(&x);
        let dx = jac.lu().solve(&(-r)).ok_or(Error::SingularJacobian)?;
        if dx.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularJacobian);
        }
        for (xi, d) in x.iter_mut().zip(dx.iter()) {
            *xi += d;
        }
        iterations += 1;
    }
}

/// Solves `g(q1) + ∇₁L_Δ(q0, q1) = 0` for `q1`, where `g` is a constant vector.
fn solve_first_slot<L: LagrangianField + ?Sized>(
    field: &L,
    scheme: Scheme,
    q0: &[f64],
    offset: &DVector<f64>,
    guess: Vec<f64>,
    h: f64,
    opts: &NewtonOptions,
) -> Result<NewtonSolution> {
    let residual = |q1: &[f64]| offset + slot_gradient(field, scheme, q0, q1, h, Slot::First);
    if field.analytic_derivatives() {
        newton(guess, opts, residual, |q1| first_slot_jacobian(field, scheme, q0, q1, h))
    } else {
        newton(guess, opts, &residual, |q1| finite_difference_jacobian(q1, &residual))
    }
}

/// Advances the discrete Euler–Lagrange map: given `(q_prev, q)` returns `q_next`.
///
/// The Newton iteration starts from the linear extrapolation `2q − q_prev`.
pub fn step<L: LagrangianField + ?Sized>(
    field: &L,
    scheme: Scheme,
    q_prev: &[f64],
    q: &[f64],
    h: f64,
    opts: &NewtonOptions,
) -> Result<NewtonSolution> {
    check_pair(field, q_prev, q, h)?;
    let momentum = slot_gradient(field, scheme, q_prev, q, h, Slot::Second);
    step_with_momentum(field, scheme, q_prev, q, &momentum, h, opts)
}

fn step_with_momentum<L: LagrangianField + ?Sized>(
    field: &L,
    scheme: Scheme,
    q_prev: &[f64],
    q: &[f64],
    momentum: &DVector<f64>,
    h: f64,
    opts: &NewtonOptions,
) -> Result<NewtonSolution> {
    let guess: Vec<f64> = q.iter().zip(q_prev).map(|(a, b)| 2.0 * a - b).collect();
    solve_first_slot(field, scheme, q, momentum, guess, h, opts)
}

/// First step from a continuous initial condition.
///
/// Sets `p0 = ∂L_cont/∂qdot(q0, qdot0)` and solves `∇₁L_Δ(q0, q1) + p0 = 0` for
/// `q1`, where `L_Δ` discretises `L_disc`. Returns `(q1, p0)`.
pub fn initial_step<D, C>(
    disc: &D,
    cont: &C,
    q0: &[f64],
    qdot0: &[f64],
    h: f64,
    scheme: Scheme,
    opts: &NewtonOptions,
) -> Result<(Vec<f64>, DVector<f64>)>
where
    D: LagrangianField + ?Sized,
    C: LagrangianField + ?Sized,
{
    check_step(h)?;
    check_dim(disc.dim(), q0.len())?;
    check_dim(disc.dim(), qdot0.len())?;
    check_dim(disc.dim(), cont.dim())?;
    let (_, _, p0) = cont.first_partials(q0, qdot0);
    let guess: Vec<f64> = q0.iter().zip(qdot0).map(|(q, v)| q + h * v).collect();
    let sol = solve_first_slot(disc, scheme, q0, &p0, guess, h, opts)?;
    Ok((sol.x, p0))
}

/// Solves `∂L_cont/∂qdot(q, qdot) = p` for `qdot`, starting from `qdot = p`.
pub fn recover_velocity<C: LagrangianField + ?Sized>(
    cont: &C,
    q: &[f64],
    p: &[f64],
    opts: &NewtonOptions,
) -> Result<Vec<f64>> {
    check_dim(cont.dim(), q.len())?;
    check_dim(cont.dim(), p.len())?;
    let target = DVector::from_column_slice(p);
    let sol = newton(p.to_vec(), opts, |v| cont.first_partials(q, v).2 - &target, |v| cont.jet(q, v).dvv)?;
    Ok(sol.x)
}

/// A predicted motion. On failure the snapshots computed so far are kept and
/// `failure` records the index of the step that could not be taken.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub h: f64,
    pub positions: Vec<Vec<f64>>,
    /// Discrete momenta `p_j`; `p_0` comes from the continuous Lagrangian.
    pub momenta: Vec<Vec<f64>>,
    /// Present when velocities were requested.
    pub velocities: Option<Vec<Vec<f64>>>,
    pub failure: Option<(usize, String)>,
}

impl Prediction {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|j| j as f64 * self.h).collect()
    }

    /// Writes `t,q1..qn[,qd1..qdn,p1..pn]` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.positions.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("q{i}")));
        if self.velocities.is_some() {
            header.extend((1..=n).map(|i| format!("qd{i}")));
            header.extend((1..=n).map(|i| format!("p{i}")));
        }
        writeln!(out, "{}", header.join(","))?;
        for j in 0..self.len() {
            let mut row = vec![fmt_f64(j as f64 * self.h)];
            row.extend(self.positions[j].iter().map(|&x| fmt_f64(x)));
            if let Some(vel) = &self.velocities {
                row.extend(vel[j].iter().map(|&x| fmt_f64(x)));
                row.extend(self.momenta[j].iter().map(|&x| fmt_f64(x)));
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Decimal rendering with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Integrates `steps` steps from `(q0, qdot0)`.
///
/// `disc` is the Lagrangian that is discretised and stepped; `cont` supplies the
/// initial momentum and, when `with_velocities` is set, the velocity recovery
/// from discrete momenta.
#[allow(clippy::too_many_arguments)]
pub fn integrate<D, C>(
    disc: &D,
    cont: &C,
    scheme: Scheme,
    q0: &[f64],
    qdot0: &[f64],
    h: f64,
    steps: usize,
    with_velocities: bool,
    opts: &NewtonOptions,
) -> Result<Prediction>
where
    D: LagrangianField + ?Sized,
    C: LagrangianField + ?Sized,
{
    integrate_until(disc, cont, scheme, q0, qdot0, h, steps, with_velocities, opts, |_| false)
}

/// Like [`integrate`], but stops after the first snapshot for which `stop` holds.
#[allow(clippy::too_many_arguments)]
pub fn integrate_until<D, C>(
    disc: &D,
    cont: &C,
    scheme: Scheme,
    q0: &[f64],
    qdot0: &[f64],
    h: f64,
    steps: usize,
    with_velocities: bool,
    opts: &NewtonOptions,
    stop: impl Fn(&[f64]) -> bool,
) -> Result<Prediction>
where
    D: LagrangianField + ?Sized,
    C: LagrangianField + ?Sized,
{
    check_step(h)?;
    check_dim(disc.dim(), q0.len())?;
    check_dim(disc.dim(), qdot0.len())?;
    check_dim(disc.dim(), cont.dim())?;
    let (_, _, p0) = cont.first_partials(q0, qdot0);
    let mut pred = Prediction {
        h,
        positions: vec![q0.to_vec()],
        momenta: vec![p0.iter().copied().collect()],
        velocities: with_velocities.then(|| vec![qdot0.to_vec()]),
        failure: None,
    };
    if stop(q0) {
        return Ok(pred);
    }
    let mut momentum = p0;
    for j in 0..steps {
        let q = pred.positions[j].clone();
        let next = if j == 0 {
            solve_first_slot(
                disc,
                scheme,
                &q,
                &momentum,
                q.iter().zip(qdot0).map(|(a, v)| a + h * v).collect(),
                h,
                opts,
            )
        } else {
            step_with_momentum(disc, scheme, &pred.positions[j - 1], &q, &momentum, h, opts)
        };
        let sol = match next {
            Ok(sol) => sol,
            Err(e) => {
                pred.failure = Some((j + 1, e.to_string()));
                break;
            }
        };
        momentum = slot_gradient(disc, scheme, &q, &sol.x, h, Slot::Second);
        if let Some(vel) = pred.velocities.as_mut() {
            match recover_velocity(cont, &sol.x, momentum.as_slice(), opts) {
                Ok(v) => vel.push(v),
                Err(e) => {
                    pred.failure = Some((j + 1, e.to_string()));
                    break;
                }
            }
        }
        let done = stop(&sol.x);
        pred.positions.push(sol.x);
        pred.momenta.push(momentum.iter().copied().collect());
        if done {
            break;
        }
    }
    Ok(pred)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::BenchmarkSystem;
    use crate::field::{ConstantLagrangian, QuadraticLagrangian};

    const H: f64 = 0.5;

    #[test]
    fn discrete_lagrangian_examples() {
        let c = ConstantLagrangian { n: 1, value: 1.0 };
        for scheme in [Scheme::Midpoint, Scheme::Trapezoidal] {
            assert!((discrete_lagrangian(&c, scheme, &[0.2], &[0.9], H).unwrap() - H).abs() < 1e-15);
        }
        let free = QuadraticLagrangian::free_particle(1);
        for scheme in [Scheme::Midpoint, Scheme::Trapezoidal] {
            let ld = discrete_lagrangian(&free, scheme, &[0.2], &[0.9], H).unwrap();
            assert!((ld - 0.49 / (2.0 * H)).abs() < 1e-15);
        }
        let pend = BenchmarkSystem::Pendulum.lagrangian();
        let ld = discrete_lagrangian(&pend, Scheme::Midpoint, &[0.0], &[0.5], 0.5).unwrap();
        assert!((ld - 0.5 * (0.5 + 0.25f64.cos())).abs() < 1e-15);
    }

    #[test]
    fn free_particle_gradients() {
        let free = QuadraticLagrangian::free_particle(1);
        for scheme in [Scheme::Midpoint, Scheme::Trapezoidal] {
            let g1 = grad_discrete_lagrangian(&free, scheme, &[0.2], &[0.9], H, Slot::First).unwrap();
            let g2 = grad_discrete_lagrangian(&free, scheme, &[0.2], &[0.9], H, Slot::Second).unwrap();
            assert!((g1[0] + 0.7 / H).abs() < 1e-14);
            assert!((g2[0] - 0.7 / H).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_sum_at_coincident_points() {
        let pend = BenchmarkSystem::Pendulum.lagrangian();
        let q = [0.4];
        let g1 = grad_discrete_lagrangian(&pend, Scheme::Midpoint, &q, &q, H, Slot::First).unwrap();
        let g2 = grad_discrete_lagrangian(&pend, Scheme::Midpoint, &q, &q, H, Slot::Second).unwrap();
        assert!((g1[0] + g2[0] - H * -(0.4f64.sin())).abs() < 1e-15);
    }

    #[test]
    fn slot_gradients_match_finite_differences() {
        let hh = BenchmarkSystem::henon_heiles(0.8).unwrap().lagrangian();
        let (q0, q1) = ([0.1, -0.3], [0.25, -0.1]);
        for scheme in [Scheme::Midpoint, Scheme::Trapezoidal] {
            for (slot, base) in [(Slot::First, 0usize), (Slot::Second, 1)] {
                let g = grad_discrete_lagrangian(&hh, scheme, &q0, &q1, H, slot).unwrap();
                for a in 0..2 {
                    let eps = 1e-6;
                    let mut pts = [q0.to_vec(), q1.to_vec()];
                    pts[base][a] += eps;
                    let fp = discrete_lagrangian(&hh, scheme, &pts[0], &pts[1], H).unwrap();
                    pts[base][a] -= 2.0 * eps;
                    let fm = discrete_lagrangian(&hh, scheme, &pts[0], &pts[1], H).unwrap();
                    assert!((g[a] - (fp - fm) / (2.0 * eps)).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn free_particle_residual_and_step() {
        let free = QuadraticLagrangian::free_particle(2);
        let (qp, q) = ([0.1, 0.4], [0.3, 0.1]);
        let next = [0.5, -0.2];
        for scheme in [Scheme::Midpoint, Scheme::Trapezoidal] {
            assert!(del_residual(&free, scheme, &qp, &q, &next, H).unwrap().norm() < 1e-15);
            let sol = step(&free, scheme, &qp, &q, H, &NewtonOptions::default()).unwrap();
            assert!(sol.iterations <= 1);
            assert!((sol.x[0] - 0.5).abs() < 1e-15 && (sol.x[1] + 0.2).abs() < 1e-15);
        }
        let c = ConstantLagrangian { n: 2, value: 3.0 };
        assert_eq!(del_residual(&c, Scheme::Midpoint, &qp, &q, &next, H).unwrap().norm(), 0.0);
    }

    #[test]
    fn harmonic_midpoint_step_matches_linear_solve() {
        // L = ½v² − ½q²: midpoint DEL is
        // (q_{j+1} − 2q_j + q_{j−1})/h + h/4 (q_{j−1} + 2q_j + q_{j+1}) = 0.
        let osc = QuadraticLagrangian::harmonic(1, 1.0, 1.0);
        let (qp, q, h) = (0.3, 0.25, 0.4);
        let expected = -((1.0 / h + h / 4.0) * qp + (h / 2.0 - 2.0 / h) * q) / (1.0 / h + h / 4.0);
        let sol = step(&osc, Scheme::Midpoint, &[qp], &[q], h, &NewtonOptions::default()).unwrap();
        assert!((sol.x[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn initial_step_free_particle() {
        let free = QuadraticLagrangian::free_particle(1);
        let (q1, p0) =
            initial_step(&free, &free, &[0.2], &[0.7], H, Scheme::Midpoint, &NewtonOptions::default()).unwrap();
        assert_eq!(p0[0], 0.7);
        assert!((q1[0] - (0.2 + H * 0.7)).abs() < 1e-15);
        let pend = BenchmarkSystem::Pendulum.lagrangian();
        let (_, p0) =
            initial_step(&pend, &pend, &[0.3], &[0.0], H, Scheme::Midpoint, &NewtonOptions::default()).unwrap();
        assert_eq!(p0[0], 0.0);
    }

    #[test]
    fn velocity_recovery() {
        let opts = NewtonOptions::default();
        let free = QuadraticLagrangian::free_particle(2);
        assert_eq!(recover_velocity(&free, &[0.0, 1.0], &[0.3, -0.4], &opts).unwrap(), vec![0.3, -0.4]);
        for m in [0.5, 2.0] {
            let heavy = QuadraticLagrangian::harmonic(1, m, 0.0);
            let v = recover_velocity(&heavy, &[0.0], &[0.6], &opts).unwrap();
            assert!((v[0] - 0.6 / m).abs() < 1e-15);
        }
    }

    #[test]
    fn nonconvergence_is_reported() {
        let opts = NewtonOptions { tol: 0.0, max_iter: 3, stall_tol: 0.0 };
        let pend = BenchmarkSystem::Pendulum.lagrangian();
        match step(&pend, Scheme::Midpoint, &[0.1], &[0.2], H, &opts) {
            Err(Error::NonConvergence { iterations, .. }) => assert_eq!(iterations, 3),
            other => panic!("unexpected {other:?}"),
        }
        let c = ConstantLagrangian { n: 1, value: 1.0 };
        let opts = NewtonOptions::default();
        assert!(matches!(
            initial_step(&c, &QuadraticLagrangian::free_particle(1), &[0.0], &[1.0], H, Scheme::Midpoint, &opts),
            Err(Error::SingularJacobian)
        ));
    }

    #[test]
    fn stalled_residual_below_stall_tol_is_accepted() {
        let pend = BenchmarkSystem::Pendulum.lagrangian();
        let strict = NewtonOptions { tol: 0.0, max_iter: 50, stall_tol: 0.0 };
        assert!(step(&pend, Scheme::Midpoint, &[0.1], &[0.2], H, &strict).is_err());
        let lenient = NewtonOptions { tol: 0.0, ..Default::default() };
        let sol = step(&pend, Scheme::Midpoint, &[0.1], &[0.2], H, &lenient).unwrap();
        assert!(sol.residual_norm <= 1e-15 && sol.iterations < 50);
        let exact = step(&pend, Scheme::Midpoint, &[0.1], &[0.2], H, &NewtonOptions::default()).unwrap();
        assert!((sol.x[0] - exact.x[0]).abs() < 1e-11);
    }

    #[test]
    fn csv_layout() {
        let free = QuadraticLagrangian::free_particle(1);
        let pred =
            integrate(&free, &free, Scheme::Midpoint, &[0.0], &[1.0], 0.5, 2, true, &NewtonOptions::default()).unwrap();
        let mut buf = Vec::new();
        pred.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,q1,qd1,p1");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("5.0000000000000000e-1,5.0000000000000000e-1,"));
        let empty = integrate(&free, &free, Scheme::Midpoint, &[0.0], &[1.0], 0.5, 0, false, &NewtonOptions::default())
            .unwrap();
        assert_eq!(empty.len(), 1);
    }
}
