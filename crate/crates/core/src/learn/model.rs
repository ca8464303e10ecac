use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::discretize::Scheme;
use crate::error::{check_dim, Error, Result};
use crate::field::{Jet, LagrangianField, Taylor4};
use crate::kernel::{Kernel, KernelAccumulator, KernelParams, Rbf, TaylorPlan};

use super::gpflow::FlowMapModel;
use super::solve::SolveDiagnostics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Lsi,
    Lgp,
    LgpExact,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Lsi => "lsi",
            ModelKind::Lgp => "lgp",
            ModelKind::LgpExact => "lgp-exact",
        })
    }
}

/// A trained kernel expansion `L(x) = Σ_i B_i k(x, z_i)` on `TQ`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    pub kind: ModelKind,
    pub scheme: Scheme,
    pub h: f64,
    pub n: usize,
    pub kernel: KernelParams,
    pub c: f64,
    pub normalisation_point: Vec<f64>,
    pub centers: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
    pub diagnostics: SolveDiagnostics,
}

/// Output of [`KernelModel::eval`].
#[derive(Debug, Clone, PartialEq)]
pub enum ModelEval {
    Value(f64),
    Gradient(Vec<f64>),
    Hessian(DMatrix<f64>),
}

impl KernelModel {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidSpec("model dimension must be at least 1".into()));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidSpec(format!("step size must be positive, got {}", self.h)));
        }
        KernelParams::new(self.kernel.epsilon, self.kernel.c_k)?;
        check_dim(self.centers.len(), self.coefficients.len())?;
        check_dim(2 * self.n, self.normalisation_point.len())?;
        for z in &self.centers {
            check_dim(2 * self.n, z.len())?;
        }
        Ok(())
    }

    pub fn rbf(&self) -> Rbf {
        Rbf::new(self.kernel)
    }

    fn accumulate(&self, x: &[f64], second_order: bool) -> KernelAccumulator {
        let rbf = self.rbf();
        let mut acc = KernelAccumulator::new(x.len());
        for (z, &b) in self.centers.iter().zip(&self.coefficients) {
            if b != 0.0 {
                rbf.accumulate(x, z, b, &mut acc, second_order);
            }
        }
        acc
    }

    /// Value (order 0), gradient (order 1) or Hessian (order 2) at a point of `TQ`.
    pub fn eval(&self, point: &[f64], order: usize) -> Result<ModelEval> {
        check_dim(2 * self.n, point.len())?;
        match order {
            0 => Ok(ModelEval::Value(self.accumulate(point, false).value)),
            1 => Ok(ModelEval::Gradient(self.accumulate(point, false).grad)),
            2 => Ok(ModelEval::Hessian(self.accumulate(point, true).hessian())),
            other => Err(Error::UnsupportedOrder(other)),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        SavedModel::Kernel(self.clone()).to_json()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        match SavedModel::from_json(text)? {
            SavedModel::Kernel(m) => Ok(m),
            SavedModel::Flow(_) => {
                Err(Error::InvalidSpec("expected a kernel Lagrangian model, found a flow-map model".into()))
            }
        }
    }
}

impl LagrangianField for KernelModel {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, q: &[f64], qdot: &[f64]) -> f64 {
        let x: Vec<f64> = q.iter().chain(qdot).copied().collect();
        self.accumulate(&x, false).value
    }

    fn jet(&self, q: &[f64], qdot: &[f64]) -> Jet {
        let x: Vec<f64> = q.iter().chain(qdot).copied().collect();
        let acc = self.accumulate(&x, true);
        Jet::from_flat(acc.value, &acc.grad, &acc.hessian())
    }

    fn first_partials(&self, q: &[f64], qdot: &[f64]) -> (f64, DVector<f64>, DVector<f64>) {
        let n = self.n;
        let x: Vec<f64> = q.iter().chain(qdot).copied().collect();
        let acc = self.accumulate(&x, false);
        (acc.value, DVector::from_column_slice(&acc.grad[..n]), DVector::from_column_slice(&acc.grad[n..]))
    }

    fn taylor4(&self, q: &[f64], qdot: &[f64]) -> Option<Taylor4> {
        let x: Vec<f64> = q.iter().chain(qdot).copied().collect();
        let rbf = self.rbf();
        let plan = TaylorPlan::new(x.len());
        let mut t = Taylor4::zeros(x.len());
        for (z, &b) in self.centers.iter().zip(&self.coefficients) {
            if b != 0.0 {
                rbf.accumulate_taylor4(&x, z, b, &plan, &mut t);
            }
        }
        t.symmetrize();
        Some(t)
    }

    fn has_taylor4(&self) -> bool {
        true
    }
}

#[derive(Serialize, Deserialize)]
struct KernelBody {
    scheme: Scheme,
    h: f64,
    n: usize,
    kernel: KernelParams,
    c: f64,
    normalisation_point: Vec<f64>,
    centers: Vec<Vec<f64>>,
    coefficients: Vec<f64>,
    diagnostics: SolveDiagnostics,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Document {
    Lsi(KernelBody),
    Lgp(KernelBody),
    LgpExact(KernelBody),
    Gpflow(FlowMapModel),
}

/// Any model the learners produce, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Kernel(KernelModel),
    Flow(FlowMapModel),
}

impl SavedModel {
    pub fn to_json(&self) -> Result<String> {
        let doc = match self {
            SavedModel::Kernel(m) => {
                let body = KernelBody {
                    scheme: m.scheme,
                    h: m.h,
                    n: m.n,
                    kernel: m.kernel,
                    c: m.c,
                    normalisation_point: m.normalisation_point.clone(),
                    centers: m.centers.clone(),
                    coefficients: m.coefficients.clone(),
                    diagnostics: m.diagnostics,
                };
                match m.kind {
                    ModelKind::Lsi => Document::Lsi(body),
                    ModelKind::Lgp => Document::Lgp(body),
                    ModelKind::LgpExact => Document::LgpExact(body),
                }
            }
            SavedModel::Flow(f) => Document::Gpflow(f.clone()),
        };
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Document = serde_json::from_str(text)?;
        let (kind, body) = match doc {
            Document::Lsi(b) => (ModelKind::Lsi, b),
            Document::Lgp(b) => (ModelKind::Lgp, b),
            Document::LgpExact(b) => (ModelKind::LgpExact, b),
            Document::Gpflow(f) => {
                f.validate()?;
                return Ok(SavedModel::Flow(f));
            }
        };
        let model = KernelModel {
            kind,
            scheme: body.scheme,
            h: body.h,
            n: body.n,
            kernel: body.kernel,
            c: body.c,
            normalisation_point: body.normalisation_point,
            centers: body.centers,
            coefficients: body.coefficients,
            diagnostics: body.diagnostics,
        };
        model.validate()?;
        Ok(SavedModel::Kernel(model))
    }
}
