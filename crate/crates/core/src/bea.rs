//! Order-2 variational backward error analysis.
//!
//! For a Lagrangian `L` the order-2 correction of a scheme is
//!
//! ```text
//! C(L) = h²/24 · ( gᵀ (D²_{q̇q̇}L)⁻¹ g + s · q̇ᵀ D²_{qq}L q̇ ),   g = ∇_q L − D²_{q̇q}L · q̇,
//! ```
//!
//! with `s = −1` for the midpoint rule and `s = 2` for the trapezoidal rule.
//! The modified Lagrangian of `L` is `L + C(L)`, the inverse modified Lagrangian
//! is `L − C(L)`, and a learned inverse modified Lagrangian `L̃` maps back to the
//! exact one through `L̃ + C(L̃)`.
//!
//! When the base field supplies fourth-order partials, the corrected field is
//! differentiated exactly by evaluating `C` in second-order forward mode;
//! otherwise the correction is differenced numerically.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::discretize::Scheme;
use crate::error::{check_dim, Error, Result};
use crate::field::{finite_difference_derivatives, Jet, LagrangianField, Taylor4};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeaDirection {
    /// Learned inverse modified Lagrangian to the exact Lagrangian: `+C`.
    InverseToExact,
    /// Exact Lagrangian to the modified Lagrangian of the scheme: `+C`.
    ExactToModified,
    /// Exact Lagrangian to the inverse modified Lagrangian: `−C`.
    ExactToInverse,
}

impl BeaDirection {
    pub fn sign(self) -> f64 {
        match self {
            BeaDirection::InverseToExact | BeaDirection::ExactToModified => 1.0,
            BeaDirection::ExactToInverse => -1.0,
        }
    }
}

/// The unsigned correction `C(L)` at a point, from the jet of `L`.
pub fn correction_from_jet(jet: &Jet, qdot: &[f64], scheme: Scheme, h: f64) -> Result<f64> {
    let v = DVector::from_column_slice(qdot);
    let g = &jet.dq - &jet.dvq * &v;
    let y = jet.dvv.clone().lu().solve(&g).ok_or(Error::SingularHessian)?;
    if y.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularHessian);
    }
    let inertial = g.dot(&y);
    let potential = v.dot(&(&jet.dqq * &v));
    let s = match scheme {
        Scheme::Midpoint => -1.0,
        Scheme::Trapezoidal => 2.0,
    };
    Ok(h * h / 24.0 * (inertial + s * potential))
}

/// A scalar with its gradient and row-major Hessian in `d` variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual2 {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

impl Dual2 {
    pub fn constant(d: usize, value: f64) -> Self {
        Self { value, grad: vec![0.0; d], hess: vec![0.0; d * d] }
    }

    pub fn variable(d: usize, i: usize, value: f64) -> Self {
        let mut x = Self::constant(d, value);
        x.grad[i] = 1.0;
        x
    }

    /// The partial `∂_index f` of a Taylor jet together with its own first and second partials.
    pub fn from_taylor(t: &Taylor4, index: &[usize]) -> Self {
        let d = t.dim;
        let mut buf = index.to_vec();
        let value = t.get(&buf);
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        for k in 0..d {
            buf.push(k);
            grad[k] = t.get(&buf);
            for l in 0..d {
                buf.push(l);
                hess[k * d + l] = t.get(&buf);
                buf.pop();
            }
            buf.pop();
        }
        Self { value, grad, hess }
    }

    fn dim(&self) -> usize {
        self.grad.len()
    }

    fn zip(&self, o: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            value: f(self.value, o.value),
            grad: self.grad.iter().zip(&o.grad).map(|(a, b)| f(*a, *b)).collect(),
            hess: self.hess.iter().zip(&o.hess).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.zip(self, |a, _| c * a)
    }

    pub fn mul(&self, o: &Self) -> Self {
        let d = self.dim();
        let (a, b) = (self.value, o.value);
        let mut out = Self::constant(d, a * b);
        for k in 0..d {
            out.grad[k] = a * o.grad[k] + b * self.grad[k];
            for l in 0..d {
                out.hess[k * d + l] = a * o.hess[k * d + l]
                    + b * self.hess[k * d + l]
                    + self.grad[k] * o.grad[l]
                    + o.grad[k] * self.grad[l];
            }
        }
        out
    }

    /// `1 / self`, `None` at zero.
    pub fn recip(&self) -> Option<Self> {
        let a = self.value;
        if a == 0.0 || !a.is_finite() {
            return None;
        }
        let (f1, f2) = (-1.0 / (a * a), 2.0 / (a * a * a));
        let d = self.dim();
        let mut out = Self::constant(d, 1.0 / a);
        for k in 0..d {
            out.grad[k] = f1 * self.grad[k];
            for l in 0..d {
                out.hess[k * d + l] = f1 * self.hess[k * d + l] + f2 * self.grad[k] * self.grad[l];
            }
        }
        Some(out)
    }
}

/// The unsigned correction `C(L)` with its exact gradient and Hessian, from the
/// fourth-order partials of `L` at `(q, q̇)`.
pub fn correction_from_taylor(t: &Taylor4, qdot: &[f64], scheme: Scheme, h: f64) -> Result<Dual2> {
    let d = t.dim;
    let n = d / 2;
    check_dim(n, qdot.len())?;
    let v: Vec<Dual2> = (0..n).map(|b| Dual2::variable(d, n + b, qdot[b])).collect();
    let mut rhs: Vec<Dual2> = (0..n)
        .map(|a| (0..n).fold(Dual2::from_taylor(t, &[a]), |g, b| g.sub(&Dual2::from_taylor(t, &[n + a, b]).mul(&v[b]))))
        .collect();
    let g = rhs.clone();
    let mut m: Vec<Vec<Dual2>> =
        (0..n).map(|a| (0..n).map(|b| Dual2::from_taylor(t, &[n + a, n + b])).collect()).collect();
    // Gaussian elimination with partial pivoting on the values.
    for col in 0..n {
        let piv =
            (col..n).max_by(|&i, &j| m[i][col].value.abs().total_cmp(&m[j][col].value.abs())).expect("non-empty range");
        m.swap(col, piv);
        rhs.swap(col, piv);
        let inv = m[col][col].recip().ok_or(Error::SingularHessian)?;
        for row in col + 1..n {
            let factor = m[row][col].mul(&inv);
            for k in col..n {
                m[row][k] = m[row][k].sub(&factor.mul(&m[col][k]));
            }
            rhs[row] = rhs[row].sub(&factor.mul(&rhs[col]));
        }
    }
    let mut y = vec![Dual2::constant(d, 0.0); n];
    for row in (0..n).rev() {
        let mut acc = rhs[row].clone();
        for k in row + 1..n {
            acc = acc.sub(&m[row][k].mul(&y[k]));
        }
        y[row] = acc.mul(&m[row][row].recip().ok_or(Error::SingularHessian)?);
    }
    let mut inertial = Dual2::constant(d, 0.0);
    let mut potential = Dual2::constant(d, 0.0);
    for a in 0..n {
        inertial = inertial.add(&g[a].mul(&y[a]));
        for b in 0..n {
            potential = potential.add(&v[a].mul(&Dual2::from_taylor(t, &[a, b])).mul(&v[b]));
        }
    }
    let s = match scheme {
        Scheme::Midpoint => -1.0,
        Scheme::Trapezoidal => 2.0,
    };
    let c = inertial.add(&potential.scale(s)).scale(h * h / 24.0);
    if !c.value.is_finite() || c.grad.iter().chain(&c.hess).any(|x| !x.is_finite()) {
        return Err(Error::SingularHessian);
    }
    Ok(c)
}

/// A base Lagrangian plus its signed order-`k` correction.
///
/// At order 2 the correction is differentiated exactly when the base provides
/// [`LagrangianField::taylor4`], and by central finite differences otherwise.
#[derive(Debug, Clone)]
pub struct BeaField<F> {
    pub base: F,
    pub scheme: Scheme,
    pub h: f64,
    pub order: usize,
    pub direction: BeaDirection,
}

/// Wraps `base` with its order-`order` correction (`order ∈ {0, 2}`).
pub fn bea_correct<F: LagrangianField>(
    base: F,
    scheme: Scheme,
    h: f64,
    order: usize,
    direction: BeaDirection,
) -> Result<BeaField<F>> {
    if order != 0 && order != 2 {
        return Err(Error::UnsupportedOrder(order));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidSpec(format!("step size must be positive, got {h}")));
    }
    Ok(BeaField { base, scheme, h, order, direction })
}

impl<F: LagrangianField> BeaField<F> {
    /// Signed correction at `(q, q̇)`; zero at order 0.
    pub fn correction(&self, q: &[f64], qdot: &[f64]) -> Result<f64> {
        check_dim(self.base.dim(), q.len())?;
        check_dim(self.base.dim(), qdot.len())?;
        if self.order == 0 {
            return Ok(0.0);
        }
        let jet = self.base.jet(q, qdot);
        Ok(self.direction.sign() * correction_from_jet(&jet, qdot, self.scheme, self.h)?)
    }

    /// Field value, failing where the base velocity Hessian is singular.
    pub fn try_value(&self, q: &[f64], qdot: &[f64]) -> Result<f64> {
        Ok(self.base.value(q, qdot) + self.correction(q, qdot)?)
    }

    /// Signed correction with exact derivatives, if the base supports them.
    /// Points where the correction is undefined give NaN entries.
    fn exact_correction(&self, q: &[f64], qdot: &[f64]) -> Option<Dual2> {
        if !self.base.has_taylor4() {
            return None;
        }
        let t = self.base.taylor4(q, qdot)?;
        let d = 2 * self.base.dim();
        Some(match correction_from_taylor(&t, qdot, self.scheme, self.h) {
            Ok(c) => c.scale(self.direction.sign()),
            Err(_) => Dual2 { value: f64::NAN, grad: vec![f64::NAN; d], hess: vec![f64::NAN; d * d] },
        })
    }

    fn correction_flat(&self, x: &[f64]) -> f64 {
        let n = self.base.dim();
        self.correction(&x[..n], &x[n..]).unwrap_or(f64::NAN)
    }
}

impl<F: LagrangianField> LagrangianField for BeaField<F> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn value(&self, q: &[f64], qdot: &[f64]) -> f64 {
        self.try_value(q, qdot).unwrap_or(f64::NAN)
    }

    fn jet(&self, q: &[f64], qdot: &[f64]) -> Jet {
        if self.order == 0 {
            return self.base.jet(q, qdot);
        }
        let (mut jet, corr) = match self.exact_correction(q, qdot) {
            Some(c) => {
                let d = c.grad.len();
                let base = self.base.taylor4(q, qdot).map_or_else(|| self.base.jet(q, qdot), |t| t.jet());
                (base, Jet::from_flat(c.value, &c.grad, &nalgebra::DMatrix::from_row_slice(d, d, &c.hess)))
            }
            None => {
                let x: Vec<f64> = q.iter().chain(qdot).copied().collect();
                let (c, grad, hess) = finite_difference_derivatives(&x, |p| self.correction_flat(p));
                (self.base.jet(q, qdot), Jet::from_flat(c, &grad, &hess))
            }
        };
        jet.value += corr.value;
        jet.dq += corr.dq;
        jet.dv += corr.dv;
        jet.dqq += corr.dqq;
        jet.dvq += corr.dvq;
        jet.dvv += corr.dvv;
        jet
    }

    fn first_partials(&self, q: &[f64], qdot: &[f64]) -> (f64, DVector<f64>, DVector<f64>) {
        let (mut value, mut dq, mut dv) = self.base.first_partials(q, qdot);
        if self.order == 0 {
            return (value, dq, dv);
        }
        let n = self.base.dim();
        if let Some(c) = self.exact_correction(q, qdot) {
            value += c.value;
            for a in 0..n {
                dq[a] += c.grad[a];
                dv[a] += c.grad[n + a];
            }
            return (value, dq, dv);
        }
        let mut x: Vec<f64> = q.iter().chain(qdot).copied().collect();
        value += self.correction_flat(&x);
        for i in 0..2 * n {
            let xi = x[i];
            let step = crate::field::FD_STEP * xi.abs().max(1.0);
            x[i] = xi + step;
            let fp = self.correction_flat(&x);
            x[i] = xi - step;
            let fm = self.correction_flat(&x);
            x[i] = xi;
            let d = (fp - fm) / (2.0 * step);
            if i < n {
                dq[i] += d;
            } else {
                dv[i - n] += d;
            }
        }
        (value, dq, dv)
    }

    fn analytic_derivatives(&self) -> bool {
        match self.order {
            0 => self.base.analytic_derivatives(),
            _ => self.base.has_taylor4(),
        }
    }
}

/// `H = q̇ · ∂L/∂q̇ − L` of any field, e.g. `H^{[[k]]}` of a corrected field.
pub fn modified_hamiltonian<F: LagrangianField + ?Sized>(field: &F, q: &[f64], qdot: &[f64]) -> Result<f64> {
    check_dim(field.dim(), q.len())?;
    check_dim(field.dim(), qdot.len())?;
    let h = field.energy(q, qdot);
    if h.is_finite() {
        Ok(h)
    } else {
        Err(Error::SingularHessian)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::BenchmarkSystem;
    use crate::field::QuadraticLagrangian;

    #[test]
    fn free_particle_is_unchanged() {
        let f =
            bea_correct(QuadraticLagrangian::free_particle(2), Scheme::Midpoint, 0.5, 2, BeaDirection::InverseToExact)
                .unwrap();
        assert_eq!(f.correction(&[0.3, -0.2], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(f.value(&[0.3, -0.2], &[1.0, 2.0]), 2.5);
    }

    #[test]
    fn pendulum_midpoint_formula() {
        let h = 0.5;
        let f =
            bea_correct(BenchmarkSystem::Pendulum.lagrangian(), Scheme::Midpoint, h, 2, BeaDirection::InverseToExact)
                .unwrap();
        for (q, v) in [(0.3f64, 0.0f64), (-1.1, 0.7), (2.0, -1.3)] {
            let expect = h * h / 24.0 * (q.sin().powi(2) + v * v * q.cos());
            assert!((f.correction(&[q], &[v]).unwrap() - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn orders_and_signs() {
        let l = BenchmarkSystem::Pendulum.lagrangian();
        assert!(bea_correct(l, Scheme::Midpoint, 0.5, 1, BeaDirection::InverseToExact).is_err());
        assert!(bea_correct(l, Scheme::Midpoint, 0.5, 4, BeaDirection::InverseToExact).is_err());
        let zero = bea_correct(l, Scheme::Midpoint, 0.5, 0, BeaDirection::InverseToExact).unwrap();
        assert_eq!(zero.value(&[0.4], &[0.2]), l.value(&[0.4], &[0.2]));
        assert!(zero.analytic_derivatives());
        let up = bea_correct(l, Scheme::Trapezoidal, 0.5, 2, BeaDirection::InverseToExact).unwrap();
        let down = bea_correct(l, Scheme::Trapezoidal, 0.5, 2, BeaDirection::ExactToInverse).unwrap();
        let fwd = bea_correct(l, Scheme::Trapezoidal, 0.5, 2, BeaDirection::ExactToModified).unwrap();
        let (a, b, c) = (
            up.correction(&[0.4], &[0.2]).unwrap(),
            down.correction(&[0.4], &[0.2]).unwrap(),
            fwd.correction(&[0.4], &[0.2]).unwrap(),
        );
        assert_eq!(a + b, 0.0);
        assert_eq!(a, c);
        assert!(up.analytic_derivatives());
        let fd_only = bea_correct(ValueOnly(l), Scheme::Trapezoidal, 0.5, 2, BeaDirection::InverseToExact).unwrap();
        assert!(!fd_only.analytic_derivatives());
    }

    /// Hides every derivative of a field, forcing the finite-difference paths.
    struct ValueOnly<F>(F);

    impl<F: LagrangianField> LagrangianField for ValueOnly<F> {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn value(&self, q: &[f64], qdot: &[f64]) -> f64 {
            self.0.value(q, qdot)
        }
        fn jet(&self, q: &[f64], qdot: &[f64]) -> Jet {
            self.0.jet(q, qdot)
        }
        fn analytic_derivatives(&self) -> bool {
            false
        }
    }

    fn check_exact_against_differences<F: LagrangianField>(base: F, scheme: Scheme, q: &[f64], v: &[f64]) {
        let n = base.dim();
        let h = 0.3;
        let t = base.taylor4(q, v).unwrap();
        let exact = correction_from_taylor(&t, v, scheme, h).unwrap();
        let via_jet = correction_from_jet(&base.jet(q, v), v, scheme, h).unwrap();
        assert!((exact.value - via_jet).abs() < 1e-14 * via_jet.abs().max(1.0));
        let x: Vec<f64> = q.iter().chain(v).copied().collect();
        let (_, grad, hess) = finite_difference_derivatives(&x, |p| {
            correction_from_jet(&base.jet(&p[..n], &p[n..]), &p[n..], scheme, h).unwrap()
        });
        let d = 2 * n;
        for k in 0..d {
            assert!((exact.grad[k] - grad[k]).abs() < 1e-8, "grad {k}: {} vs {}", exact.grad[k], grad[k]);
            for l in 0..d {
                assert!((exact.hess[k * d + l] - hess[(k, l)]).abs() < 1e-5, "hess {k}{l}");
            }
        }
        let exact_field = bea_correct(&base, scheme, h, 2, BeaDirection::ExactToInverse).unwrap();
        let fd_field = bea_correct(ValueOnly(&base), scheme, h, 2, BeaDirection::ExactToInverse).unwrap();
        let (je, jf) = (exact_field.jet(q, v), fd_field.jet(q, v));
        assert!((je.value - jf.value).abs() < 1e-14);
        assert!((&je.dq - &jf.dq).amax() < 1e-8 && (&je.dv - &jf.dv).amax() < 1e-8);
        assert!((&je.dvv - &jf.dvv).amax() < 1e-5 && (&je.dvq - &jf.dvq).amax() < 1e-5);
        let (_, dq, dv) = exact_field.first_partials(q, v);
        assert!((dq - &je.dq).amax() < 1e-15 && (dv - &je.dv).amax() < 1e-15);
    }

    #[test]
    fn exact_correction_derivatives_for_reference_systems() {
        for scheme in [Scheme::Midpoint, Scheme::Trapezoidal] {
            check_exact_against_differences(BenchmarkSystem::Pendulum.lagrangian(), scheme, &[0.7], &[-0.4]);
            let hh = BenchmarkSystem::henon_heiles(0.8).unwrap().lagrangian();
            check_exact_against_differences(hh, scheme, &[0.2, -0.3], &[0.5, 0.1]);
        }
    }

    #[test]
    fn exact_correction_derivatives_for_kernel_models() {
        use crate::kernel::KernelParams;
        use crate::learn::{KernelModel, ModelKind, SolveDiagnostics};
        // A strongly convex-in-velocity expansion so the velocity Hessian is invertible.
        let centers = vec![vec![0.1, -0.2, 0.3, 0.0], vec![-0.4, 0.3, -0.1, 0.2], vec![0.2, 0.5, 0.0, -0.3]];
        let model = KernelModel {
            kind: ModelKind::Lsi,
            scheme: Scheme::Midpoint,
            h: 0.1,
            n: 2,
            kernel: KernelParams::new(1.1, 1.0).unwrap(),
            c: 1.0,
            normalisation_point: vec![0.0; 4],
            centers,
            coefficients: vec![-2.0, -1.5, -1.0],
            diagnostics: SolveDiagnostics { rank: 3, residual: 0.0 },
        };
        assert!(model.jet(&[0.1, 0.0], &[0.05, -0.1]).dvv.determinant().abs() > 1e-3);
        for scheme in [Scheme::Midpoint, Scheme::Trapezoidal] {
            check_exact_against_differences(&model, scheme, &[0.1, 0.0], &[0.05, -0.1]);
        }
    }

    #[test]
    fn singular_velocity_hessian_is_reported() {
        let degenerate = QuadraticLagrangian { n: 1, mass: 0.0, stiffness: 1.0 };
        let f = bea_correct(degenerate, Scheme::Midpoint, 0.1, 2, BeaDirection::InverseToExact).unwrap();
        assert!(matches!(f.correction(&[0.2], &[0.1]), Err(Error::SingularHessian)));
        assert!(f.value(&[0.2], &[0.1]).is_nan());
    }

    #[test]
    fn modified_hamiltonian_examples() {
        let l = BenchmarkSystem::Pendulum.lagrangian();
        assert_eq!(modified_hamiltonian(&l, &[0.0], &[0.0]).unwrap(), -1.0);
        let hh = BenchmarkSystem::henon_heiles(0.8).unwrap();
        let (q, v) = ([0.1, 0.2], [0.3, -0.4]);
        let h = modified_hamiltonian(&hh.lagrangian(), &q, &v).unwrap();
        assert!((h - hh.reference_energy(&q, &v).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn corrected_partials_match_finite_differences_of_value() {
        let f = bea_correct(
            BenchmarkSystem::henon_heiles(0.8).unwrap().lagrangian(),
            Scheme::Midpoint,
            0.1,
            2,
            BeaDirection::InverseToExact,
        )
        .unwrap();
        let (q, v) = ([0.2, -0.1], [0.3, 0.1]);
        let (_, dq, dv) = f.first_partials(&q, &v);
        let jet = f.jet(&q, &v);
        let x: Vec<f64> = q.iter().chain(&v).copied().collect();
        let (_, grad, _) = finite_difference_derivatives(&x, |p| f.value(&p[..2], &p[2..]));
        for i in 0..2 {
            assert!((dq[i] - grad[i]).abs() < 1e-8);
            assert!((dv[i] - grad[2 + i]).abs() < 1e-8);
            assert!((jet.dq[i] - dq[i]).abs() < 1e-12);
        }
    }
}
