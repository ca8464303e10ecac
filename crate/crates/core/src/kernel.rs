//! Kernels on `TQ` with analytic derivatives in the first argument.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::field::Taylor4;

/// Parameters of the scaled radial basis function `c_k exp(−‖x−y‖²/ε²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub epsilon: f64,
    pub c_k: f64,
}

impl KernelParams {
    pub fn new(epsilon: f64, c_k: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidSpec(format!("kernel epsilon must be positive, got {epsilon}")));
        }
        if !(c_k > 0.0 && c_k.is_finite()) {
            return Err(Error::InvalidSpec(format!("kernel scale c_k must be positive, got {c_k}")));
        }
        Ok(Self { epsilon, c_k })
    }
}

/// Derivative block returned by [`Kernel::derivative`].
#[derive(Debug, Clone, PartialEq)]
pub enum KernelDerivative {
    /// `∂k/∂x_a` for every coordinate `a`.
    Gradient(Vec<f64>),
    /// `∂²k/∂x_a∂x_b`.
    Hessian(DMatrix<f64>),
}

/// Accumulates weighted kernel values and first-argument derivatives.
#[derive(Debug, Clone)]
pub struct KernelAccumulator {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Row-major `d × d`.
    pub hess: Vec<f64>,
}

impl KernelAccumulator {
    pub fn new(d: usize) -> Self {
        Self { value: 0.0, grad: vec![0.0; d], hess: vec![0.0; d * d] }
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        let d = self.grad.len();
        DMatrix::from_row_slice(d, d, &self.hess)
    }
}

/// Value-plus-derivatives contract for a kernel. Derivatives are taken with
/// respect to the first argument only.
pub trait Kernel: Send + Sync {
    fn value(&self, x: &[f64], y: &[f64]) -> f64;

    /// Adds `weight · (k, ∇ₓk[, ∇ₓ²k])` into `acc`.
    fn accumulate(&self, x: &[f64], y: &[f64], weight: f64, acc: &mut KernelAccumulator, second_order: bool);

    fn gradient(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut acc = KernelAccumulator::new(x.len());
        self.accumulate(x, y, 1.0, &mut acc, false);
        acc.grad
    }

    fn hessian(&self, x: &[f64], y: &[f64]) -> DMatrix<f64> {
        let mut acc = KernelAccumulator::new(x.len());
        self.accumulate(x, y, 1.0, &mut acc, true);
        acc.hessian()
    }

    fn checked_value(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(x.len(), y.len())?;
        Ok(self.value(x, y))
    }

    /// Derivative block of the given order (1 or 2).
    fn derivative(&self, x: &[f64], y: &[f64], order: usize) -> Result<KernelDerivative> {
        check_dim(x.len(), y.len())?;
        match order {
            1 => Ok(KernelDerivative::Gradient(self.gradient(x, y))),
            2 => Ok(KernelDerivative::Hessian(self.hessian(x, y))),
            other => Err(Error::UnsupportedOrder(other)),
        }
    }
}

/// Scaled radial basis function kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rbf {
    pub params: KernelParams,
}

impl Rbf {
    pub fn new(params: KernelParams) -> Self {
        Self { params }
    }
}

/// The sorted multi-indices of a [`Taylor4`] with their per-coordinate multiplicities.
#[derive(Debug, Clone)]
pub struct TaylorPlan {
    dim: usize,
    /// `(order, offset into tensors[order], multiplicity of each coordinate)`.
    entries: Vec<(usize, usize, Vec<usize>)>,
}

impl TaylorPlan {
    pub fn new(dim: usize) -> Self {
        let probe = Taylor4::zeros(dim);
        let entries = Taylor4::sorted_indices(dim)
            .into_iter()
            .map(|idx| {
                let mut counts = vec![0; dim];
                for &i in &idx {
                    counts[i] += 1;
                }
                (idx.len(), probe.offset(&idx), counts)
            })
            .collect();
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Rbf {
    /// Adds `weight ·` all partials of `k(·, y)` up to fourth order at `x` into
    /// the sorted entries of `out`; call [`Taylor4::symmetrize`] afterwards.
    ///
    /// The kernel factorises over coordinates, and the `m`-th derivative of
    /// `exp(−t²/ε²)` is `(−1/ε)^m H_m(t/ε) exp(−t²/ε²)` with physicists' Hermite `H_m`.
    pub fn accumulate_taylor4(&self, x: &[f64], y: &[f64], weight: f64, plan: &TaylorPlan, out: &mut Taylor4) {
        let eps = self.params.epsilon;
        let mut factors = [[0.0f64; 5]; 8];
        let mut factor_vec;
        let factors: &mut [[f64; 5]] = if plan.dim <= 8 {
            &mut factors[..plan.dim]
        } else {
            factor_vec = vec![[0.0; 5]; plan.dim];
            &mut factor_vec
        };
        let mut r2 = 0.0;
        for (i, f) in factors.iter_mut().enumerate() {
            let u = (x[i] - y[i]) / eps;
            r2 += u * u;
            let s = -1.0 / eps;
            let u2 = u * u;
            *f = [
                1.0,
                s * 2.0 * u,
                s * s * (4.0 * u2 - 2.0),
                s * s * s * (8.0 * u2 * u - 12.0 * u),
                s * s * s * s * (16.0 * u2 * u2 - 48.0 * u2 + 12.0),
            ];
        }
        let k = weight * self.params.c_k * (-r2).exp();
        for (order, offset, counts) in &plan.entries {
            let mut prod = k;
            for (f, &c) in factors.iter().zip(counts) {
                if c > 0 {
                    prod *= f[c];
                }
            }
            out.tensors[*order][*offset] += prod;
        }
    }
}

impl Kernel for Rbf {
    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        self.params.c_k * (-r2 / (self.params.epsilon * self.params.epsilon)).exp()
    }

    fn accumulate(&self, x: &[f64], y: &[f64], weight: f64, acc: &mut KernelAccumulator, second_order: bool) {
        let d = x.len();
        let inv_e2 = 1.0 / (self.params.epsilon * self.params.epsilon);
        // Stack buffer for the common low-dimensional case.
        let mut diff_buf = [0.0f64; 8];
        let mut diff_vec;
        let diff: &mut [f64] = if d <= 8 {
            &mut diff_buf[..d]
        } else {
            diff_vec = vec![0.0; d];
            &mut diff_vec
        };
        let mut r2 = 0.0;
        for a in 0..d {
            diff[a] = x[a] - y[a];
            r2 += diff[a] * diff[a];
        }
        let k = weight * self.params.c_k * (-r2 * inv_e2).exp();
        acc.value += k;
        let g = -2.0 * inv_e2 * k;
        for a in 0..d {
            acc.grad[a] += g * diff[a];
        }
        if second_order {
            let c4 = 4.0 * inv_e2 * inv_e2 * k;
            for a in 0..d {
                let row = &mut acc.hess[a * d..(a + 1) * d];
                for b in 0..d {
                    row[b] += c4 * (diff[a] * diff[b]);
                }
                row[a] += g;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rbf(epsilon: f64, c_k: f64) -> Rbf {
        Rbf::new(KernelParams::new(epsilon, c_k).unwrap())
    }

    #[test]
    fn value_examples() {
        let k = rbf(5.0, 2.5);
        assert_eq!(k.value(&[0.3, -1.0], &[0.3, -1.0]), 2.5);
        let k = rbf(5.0, 1.0);
        let v = k.value(&[0.0, 0.0], &[3.0, 4.0]);
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.3678794).abs() < 1e-7);
    }

    #[test]
    fn derivatives_at_coincident_points() {
        let k = rbf(0.7, 3.0);
        let x = [0.1, 0.2, -0.3, 0.4];
        assert!(k.gradient(&x, &x).iter().all(|&g| g == 0.0));
        let h = k.hessian(&x, &x);
        for a in 0..4 {
            assert!((h[(a, a)] + 2.0 * 3.0 / 0.49).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let k = rbf(1.0, 1.0);
        assert!(k.checked_value(&[0.0], &[0.0, 1.0]).is_err());
        assert!(matches!(k.derivative(&[0.0], &[0.0], 3), Err(Error::UnsupportedOrder(3))));
        assert!(KernelParams::new(0.0, 1.0).is_err());
        assert!(KernelParams::new(1.0, -1.0).is_err());
    }

    #[test]
    fn symmetric_value_and_hessian() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = rbf(1.3, 0.8);
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            assert_eq!(k.value(&x, &y), k.value(&y, &x));
            let h = k.hessian(&x, &y);
            assert_eq!(h, h.transpose());
        }
    }

    #[test]
    fn taylor4_matches_lower_orders_and_differences_of_hessian() {
        let k = rbf(1.3, 0.8);
        let (x, y) = ([0.4, -0.3, 0.9], [-0.2, 0.5, 0.1]);
        let plan = TaylorPlan::new(3);
        let mut t = Taylor4::zeros(3);
        k.accumulate_taylor4(&x, &y, 1.5, &plan, &mut t);
        t.symmetrize();
        let mut acc = KernelAccumulator::new(3);
        k.accumulate(&x, &y, 1.5, &mut acc, true);
        assert!((t.get(&[]) - acc.value).abs() < 1e-15);
        for a in 0..3 {
            assert!((t.get(&[a]) - acc.grad[a]).abs() < 1e-14);
            for b in 0..3 {
                assert!((t.get(&[a, b]) - acc.hess[a * 3 + b]).abs() < 1e-14);
            }
        }
        let hess_at = |p: &[f64]| {
            let mut acc = KernelAccumulator::new(3);
            k.accumulate(p, &y, 1.5, &mut acc, true);
            acc.hess
        };
        let h = 1e-4;
        for c in 0..3 {
            let mut xp = x;
            xp[c] += h;
            let mut xm = x;
            xm[c] -= h;
            let (hp, hm, h0) = (hess_at(&xp), hess_at(&xm), hess_at(&x));
            for a in 0..3 {
                for b in 0..3 {
                    let third = (hp[a * 3 + b] - hm[a * 3 + b]) / (2.0 * h);
                    assert!((t.get(&[a, b, c]) - third).abs() < 1e-6);
                    let fourth = (hp[a * 3 + b] - 2.0 * h0[a * 3 + b] + hm[a * 3 + b]) / (h * h);
                    assert!((t.get(&[a, b, c, c]) - fourth).abs() < 1e-4);
                }
            }
        }
    }
}
