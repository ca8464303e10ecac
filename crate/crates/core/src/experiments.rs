//! End-to-end benchmark runs: data generation, training of every learner,
//! prediction and evaluation, with the benchmark parameters as defaults.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    contour_grid, divergence_time, energy_trace, nu_metric, ContourGrid, Energy, EnergyTrace, GridAxis, GridSpec,
    NuResult,
};
use crate::bea::{bea_correct, BeaDirection, BeaField};
use crate::datagen::{generate_dataset, stormer_verlet, GroundTruthSpec, SamplerSpec};
use crate::discretize::{integrate, integrate_until, recover_velocity, NewtonOptions, Prediction, Scheme};
use crate::domain::{BenchmarkSystem, Bounds, ReferenceLagrangian, TrajectoryDataset};
use crate::error::{Error, Result, StageContext};
use crate::field::LagrangianField;
use crate::kernel::KernelParams;
use crate::learn::{
    train_gpflow, train_lgp, train_lsi, FlowMapModel, FlowPrediction, GpFlowConfig, KernelModel, LgpMode, TrainConfig,
};

/// Learner settings shared by the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSettings {
    pub epsilon: f64,
    pub c_k: f64,
    pub scheme: Scheme,
    pub c: f64,
    pub rcond: f64,
}

impl LearnerSettings {
    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::new(KernelParams::new(self.epsilon, self.c_k)?, self.scheme);
        cfg.c = self.c;
        cfg.rcond = self.rcond;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Data generation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSettings {
    pub h: f64,
    pub n_traj: usize,
    pub traj_len: usize,
    pub h_fine: f64,
    pub domain: Bounds,
}

impl DataSettings {
    pub fn generate(&self, system: &BenchmarkSystem) -> Result<TrajectoryDataset> {
        let sampler = SamplerSpec { bounds: self.domain.clone(), count: self.n_traj, skip: 0 };
        let gt = GroundTruthSpec { h: self.h, steps_per_sample: self.traj_len, h_fine: self.h_fine };
        generate_dataset(system, &sampler, &gt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendulumConfig {
    pub data: DataSettings,
    pub learner: LearnerSettings,
    /// Grid for the ν metric.
    pub nu_grid: GridSpec,
    pub q0: Vec<f64>,
    pub qdot0: Vec<f64>,
    pub steps: usize,
    pub newton: NewtonOptions,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        let h = 0.5;
        Self {
            data: DataSettings {
                h,
                n_traj: 400,
                traj_len: 6,
                h_fine: h / 500.0,
                domain: Bounds { lower: vec![-PI, -1.2], upper: vec![PI, 1.2] },
            },
            learner: LearnerSettings { epsilon: 5.0, c_k: 1.0, scheme: Scheme::Midpoint, c: 1.0, rcond: 1e-8 },
            nu_grid: GridSpec {
                axes: vec![
                    GridAxis::Free { lo: -1.2, hi: 1.2, count: 30 },
                    GridAxis::Free { lo: -0.6, hi: 0.6, count: 30 },
                ],
            },
            q0: vec![0.3],
            qdot0: vec![0.0],
            steps: 2000,
            newton: NewtonOptions::default(),
        }
    }
}

/// ν values of every learned Hamiltonian against the reference energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuTable {
    /// `H` of the recovered Lagrangian `L_inv + C(L_inv)`.
    pub lsi_bea: NuResult,
    /// `H` of the modified Lagrangian of `L_LGP`, which governs its numerical motion.
    pub lgp_bea: NuResult,
    pub lgp_exact_bea: NuResult,
    /// `H` of the learned Lagrangians themselves.
    pub lgp_direct: NuResult,
    pub lgp_exact_direct: NuResult,
}

/// A prediction of a kernel Lagrangian model together with the energies along it.
#[derive(Debug, Clone)]
pub struct EvaluatedPrediction {
    pub prediction: Prediction,
    pub reference_energy: EnergyTrace,
}

#[derive(Debug, Clone)]
pub struct PendulumRun {
    pub config: PendulumConfig,
    pub dataset: TrajectoryDataset,
    pub lsi: KernelModel,
    pub lgp: KernelModel,
    pub lgp_exact: KernelModel,
    pub nu: NuTable,
    /// LSI motion, velocities from the recovered Lagrangian.
    pub lsi_run: EvaluatedPrediction,
    pub lgp_run: EvaluatedPrediction,
    pub lgp_exact_run: EvaluatedPrediction,
    /// `H^{[[0]]}` and `H^{[[2]]}` along the LSI motion.
    pub lsi_modified_energy: [EnergyTrace; 2],
    /// Exact positions at the prediction times.
    pub reference_positions: Vec<Vec<f64>>,
    /// `H^{[[2]]}` contours of each learner over the ν grid.
    pub contours: Vec<(String, ContourGrid)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    pub band: f64,
    pub slope: f64,
    pub drift: bool,
    pub steps: usize,
}

impl From<&EnergyTrace> for TraceStats {
    fn from(t: &EnergyTrace) -> Self {
        Self { band: t.band(), slope: t.slope(), drift: t.has_linear_drift(), steps: t.values.len().saturating_sub(1) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelStats {
    pub centers: usize,
    pub rank: usize,
    pub residual: f64,
}

impl From<&KernelModel> for ModelStats {
    fn from(m: &KernelModel) -> Self {
        Self { centers: m.centers.len(), rank: m.diagnostics.rank, residual: m.diagnostics.residual }
    }
}

/// Metrics of a pendulum run alongside the target values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendulumSummary {
    pub trajectories: usize,
    pub triples: usize,
    pub models: [(String, ModelStats); 3],
    pub nu: NuTable,
    pub target_nu: [(String, f64); 5],
    pub lsi_h0: TraceStats,
    pub lsi_h2: TraceStats,
    pub target_bands: [(String, f64); 2],
    pub href: [(String, TraceStats); 3],
    /// Maximum position error of the first 13 snapshots against the exact flow.
    pub snapshot_errors: [(String, f64); 3],
    pub failures: Vec<(String, usize, String)>,
}

fn reference_energy_field(system: BenchmarkSystem) -> Energy<ReferenceLagrangian> {
    Energy(system.lagrangian())
}

fn evaluate_prediction(system: BenchmarkSystem, prediction: Prediction) -> Result<EvaluatedPrediction> {
    let reference_energy = energy_trace(
        |q, v| system.reference_energy(q, v).unwrap_or(f64::NAN),
        &prediction.positions,
        prediction.velocities.as_deref(),
        prediction.h,
    )?;
    Ok(EvaluatedPrediction { prediction, reference_energy })
}

/// Velocities recovered from the prediction's momenta with `field`, up to the
/// first snapshot where recovery fails. The initial velocity is kept when known.
pub fn legendre_velocities<F: LagrangianField + ?Sized>(
    field: &F,
    prediction: &Prediction,
    opts: &NewtonOptions,
) -> Vec<Vec<f64>> {
    let mut velocities = Vec::with_capacity(prediction.len());
    for (j, (q, p)) in prediction.positions.iter().zip(&prediction.momenta).enumerate() {
        let v = match (j, prediction.velocities.as_ref()) {
            (0, Some(v)) => v[0].clone(),
            _ => match recover_velocity(field, q, p, opts) {
                Ok(v) => v,
                Err(_) => break,
            },
        };
        velocities.push(v);
    }
    velocities
}

/// Energy of `field` along a prediction, velocities from [`legendre_velocities`].
fn legendre_trace<F: LagrangianField>(field: &F, prediction: &Prediction, opts: &NewtonOptions) -> Result<EnergyTrace> {
    let velocities = legendre_velocities(field, prediction, opts);
    let positions = &prediction.positions[..velocities.len()];
    energy_trace(|q, v| field.energy(q, v), positions, Some(&velocities), prediction.h)
}

/// Recovered Lagrangian of an LSI model.
pub fn lsi_recovered(model: &KernelModel) -> Result<BeaField<&KernelModel>> {
    bea_correct(model, model.scheme, model.h, 2, BeaDirection::InverseToExact)
}

/// Modified Lagrangian whose flow the numerical motion of `model` follows.
pub fn numerical_lagrangian(model: &KernelModel) -> Result<BeaField<&KernelModel>> {
    bea_correct(model, model.scheme, model.h, 2, BeaDirection::ExactToModified)
}

pub fn run_pendulum(config: &PendulumConfig) -> Result<PendulumRun> {
    let system = BenchmarkSystem::Pendulum;
    let dataset = config.data.generate(&system).stage("gen-data")?;
    let train = config.learner.train_config().stage("train")?;
    let lsi = train_lsi(&dataset, &train).stage("train lsi")?;
    let lgp = train_lgp(&dataset, &train, LgpMode::FiniteDifference).stage("train lgp")?;
    let lgp_exact = train_lgp(&dataset, &train, LgpMode::Exact(system)).stage("train lgp-exact")?;

    let href = reference_energy_field(system);
    let lsi_l2 = lsi_recovered(&lsi)?;
    let lgp_mod = numerical_lagrangian(&lgp)?;
    let lgp_exact_mod = numerical_lagrangian(&lgp_exact)?;
    let grid = &config.nu_grid;
    let nu = (|| {
        Ok(NuTable {
            lsi_bea: nu_metric(&Energy(&lsi_l2), &href, grid)?,
            lgp_bea: nu_metric(&Energy(&lgp_mod), &href, grid)?,
            lgp_exact_bea: nu_metric(&Energy(&lgp_exact_mod), &href, grid)?,
            lgp_direct: nu_metric(&Energy(&lgp), &href, grid)?,
            lgp_exact_direct: nu_metric(&Energy(&lgp_exact), &href, grid)?,
        })
    })()
    .stage("analyze nu")?;

    let (h, q0, v0, steps, opts) = (dataset.h, &config.q0, &config.qdot0, config.steps, &config.newton);
    let scheme = config.learner.scheme;
    let lsi_pred = integrate(&lsi, &lsi_l2, scheme, q0, v0, h, steps, true, opts).stage("predict lsi")?;
    let lgp_pred = integrate(&lgp, &lgp, scheme, q0, v0, h, steps, true, opts).stage("predict lgp")?;
    let lgp_exact_pred =
        integrate(&lgp_exact, &lgp_exact, scheme, q0, v0, h, steps, true, opts).stage("predict lgp-exact")?;
    let (lsi_modified_energy, lsi_run, lgp_run, lgp_exact_run) = (|| {
        let lsi_order0 = bea_correct(&lsi, scheme, h, 0, BeaDirection::InverseToExact)?;
        let modified = [legendre_trace(&lsi_order0, &lsi_pred, opts)?, legendre_trace(&lsi_l2, &lsi_pred, opts)?];
        Ok((
            modified,
            evaluate_prediction(system, lsi_pred.clone())?,
            evaluate_prediction(system, lgp_pred.clone())?,
            evaluate_prediction(system, lgp_exact_pred.clone())?,
        ))
    })()
    .stage("analyze energy")?;

    let m = (h / config.data.h_fine).round() as usize;
    let reference_positions = stormer_verlet(&system, q0, v0, config.data.h_fine, steps * m)
        .stage("reference motion")?
        .into_iter()
        .step_by(m)
        .map(|(q, _)| q)
        .collect();

    let contours = (|| {
        Ok(vec![
            ("reference".to_string(), contour_grid(&href, grid)?),
            ("lsi".to_string(), contour_grid(&Energy(&lsi_l2), grid)?),
            ("lgp".to_string(), contour_grid(&Energy(&lgp_mod), grid)?),
            ("lgp-exact".to_string(), contour_grid(&Energy(&lgp_exact_mod), grid)?),
        ])
    })()
    .stage("analyze contour")?;

    Ok(PendulumRun {
        config: config.clone(),
        dataset,
        lsi,
        lgp,
        lgp_exact,
        nu,
        lsi_run,
        lgp_run,
        lgp_exact_run,
        lsi_modified_energy,
        reference_positions,
        contours,
    })
}

fn snapshot_error(pred: &Prediction, reference: &[Vec<f64>], count: usize) -> f64 {
    pred.positions
        .iter()
        .zip(reference)
        .take(count)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
}

impl PendulumRun {
    pub fn summary(&self) -> PendulumSummary {
        let runs = [("lsi", &self.lsi_run), ("lgp", &self.lgp_run), ("lgp-exact", &self.lgp_exact_run)];
        PendulumSummary {
            trajectories: self.dataset.trajectories.len(),
            triples: self.dataset.triple_count(),
            models: [
                ("lsi".into(), (&self.lsi).into()),
                ("lgp".into(), (&self.lgp).into()),
                ("lgp-exact".into(), (&self.lgp_exact).into()),
            ],
            nu: self.nu,
            target_nu: [
                ("lsi-bea".into(), 0.01),
                ("lgp-bea".into(), 0.05),
                ("lgp-exact-bea".into(), 0.1),
                ("lgp-direct".into(), 0.03),
                ("lgp-exact-direct".into(), 3.4e-5),
            ],
            lsi_h0: (&self.lsi_modified_energy[0]).into(),
            lsi_h2: (&self.lsi_modified_energy[1]).into(),
            target_bands: [("h0".into(), 1e-4), ("h2".into(), 1e-6)],
            href: runs.map(|(name, r)| (name.to_string(), (&r.reference_energy).into())),
            snapshot_errors: runs
                .map(|(name, r)| (name.to_string(), snapshot_error(&r.prediction, &self.reference_positions, 13))),
            failures: runs
                .iter()
                .filter_map(|(name, r)| r.prediction.failure.clone().map(|(j, e)| (name.to_string(), j, e)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HenonHeilesConfig {
    pub alpha: f64,
    pub data: DataSettings,
    pub learner: LearnerSettings,
    pub gpflow: GpFlowConfig,
    pub q0: Vec<f64>,
    pub qdot0: Vec<f64>,
    /// Divergence radius on `‖q‖`.
    pub bound: f64,
    /// Integration horizon; runs that have not diverged by then are censored.
    pub t_max: f64,
    /// Grid over the `q`-plane with `q̇ = 0` for potential contours.
    pub potential_grid: GridSpec,
    pub newton: NewtonOptions,
    /// Every `output_stride`-th snapshot enters the energy traces and exported trajectories.
    #[serde(default = "default_stride")]
    pub output_stride: usize,
}

fn default_stride() -> usize {
    10
}

impl Default for HenonHeilesConfig {
    fn default() -> Self {
        let h = 0.1;
        Self {
            alpha: 0.8,
            data: DataSettings {
                h,
                n_traj: 200,
                traj_len: 5,
                h_fine: h / 500.0,
                domain: Bounds { lower: vec![-0.8; 4], upper: vec![0.8; 4] },
            },
            // At the default cutoff 1e-8 only the velocity-linear gauge part of
            // the solution survives and the learned Lagrangians are degenerate.
            learner: LearnerSettings { epsilon: 10.0, c_k: 1.0, scheme: Scheme::Midpoint, c: 1.0, rcond: 1e-12 },
            gpflow: GpFlowConfig::default(),
            q0: vec![0.675499, 0.08],
            qdot0: vec![0.0, 0.0],
            bound: 2.0,
            t_max: 5.0e4,
            potential_grid: GridSpec {
                axes: vec![
                    GridAxis::Free { lo: -1.0, hi: 1.0, count: 41 },
                    GridAxis::Free { lo: -1.0, hi: 1.0, count: 41 },
                    GridAxis::Fixed(0.0),
                    GridAxis::Fixed(0.0),
                ],
            },
            newton: NewtonOptions::default(),
            output_stride: default_stride(),
        }
    }
}

/// How a long run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    /// `‖q‖` exceeded the bound.
    Diverged,
    /// The implicit step failed before the bound was reached.
    StepFailure,
    /// Neither happened before the horizon.
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub outcome: Outcome,
    /// Divergence or failure time; the horizon when censored.
    pub time: f64,
}

impl Divergence {
    fn of(positions: &[Vec<f64>], failure: bool, bound: f64, h: f64, t_max: f64) -> Result<Self> {
        Ok(match divergence_time(positions, bound, h)? {
            Some(time) => Divergence { outcome: Outcome::Diverged, time },
            None if failure => Divergence { outcome: Outcome::StepFailure, time: (positions.len()) as f64 * h },
            None => Divergence { outcome: Outcome::Censored, time: t_max },
        })
    }
}

#[derive(Debug, Clone)]
pub struct HenonHeilesRun {
    pub config: HenonHeilesConfig,
    pub dataset: TrajectoryDataset,
    pub lsi: KernelModel,
    pub lgp: KernelModel,
    pub gpflow: FlowMapModel,
    pub lsi_prediction: Prediction,
    pub lgp_prediction: Prediction,
    pub gpflow_prediction: FlowPrediction,
    pub divergence: [(String, Divergence); 3],
    /// Reference energy at every `output_stride`-th snapshot of each motion.
    pub energy: [(String, EnergyTrace); 3],
    /// `V^{[[2]]}` of LSI, `V` of LGP's numerical Lagrangian and the reference potential.
    pub contours: Vec<(String, ContourGrid)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HenonHeilesSummary {
    pub trajectories: usize,
    pub triples: usize,
    pub models: [(String, ModelStats); 2],
    pub gpflow_epsilon: f64,
    pub gpflow_log_marginal_likelihood: f64,
    pub initial_energy: f64,
    pub escape_energy: f64,
    pub divergence: [(String, Divergence); 3],
    pub target_divergence: [(String, f64); 3],
    /// Reference-energy band of each motion up to its divergence.
    pub energy: [(String, TraceStats); 3],
    pub failures: Vec<(String, usize, String)>,
}

pub fn run_henon_heiles(config: &HenonHeilesConfig) -> Result<HenonHeilesRun> {
    let system = BenchmarkSystem::henon_heiles(config.alpha)?;
    let dataset = config.data.generate(&system).stage("gen-data")?;
    let train = config.learner.train_config().stage("train")?;
    let lsi = train_lsi(&dataset, &train).stage("train lsi")?;
    let lgp = train_lgp(&dataset, &train, LgpMode::FiniteDifference).stage("train lgp")?;
    let gpflow = train_gpflow(&dataset, &config.gpflow).stage("train gpflow")?;

    if !(config.t_max > 0.0) {
        return Err(Error::InvalidSpec("t_max must be positive".into()));
    }
    let h = dataset.h;
    let steps = (config.t_max / h).round() as usize;
    let (q0, v0, opts, bound) = (&config.q0, &config.qdot0, &config.newton, config.bound);
    let scheme = config.learner.scheme;
    let escaped = |q: &[f64]| !(q.iter().map(|x| x * x).sum::<f64>().sqrt() <= bound);

    let lsi_l2 = lsi_recovered(&lsi)?;
    let lsi_prediction =
        integrate_until(&lsi, &lsi_l2, scheme, q0, v0, h, steps, false, opts, escaped).stage("predict lsi")?;
    let lgp_prediction =
        integrate_until(&lgp, &lgp, scheme, q0, v0, h, steps, false, opts, escaped).stage("predict lgp")?;
    let mut gpflow_prediction = gpflow.rollout(q0, v0, 0).stage("predict gpflow")?;
    let mut x: Vec<f64> = q0.iter().chain(v0.iter()).copied().collect();
    for _ in 0..steps {
        if escaped(&x[..system.dim()]) {
            break;
        }
        x = gpflow.predict(&x).stage("predict gpflow")?;
        gpflow_prediction.positions.push(x[..system.dim()].to_vec());
        gpflow_prediction.velocities.push(x[system.dim()..].to_vec());
    }

    let divergence = [
        ("gpflow".to_string(), Divergence::of(&gpflow_prediction.positions, false, bound, h, config.t_max)?),
        (
            "lgp".to_string(),
            Divergence::of(&lgp_prediction.positions, lgp_prediction.failure.is_some(), bound, h, config.t_max)?,
        ),
        (
            "lsi".to_string(),
            Divergence::of(&lsi_prediction.positions, lsi_prediction.failure.is_some(), bound, h, config.t_max)?,
        ),
    ];

    let stride = config.output_stride.max(1);
    let href = |q: &[f64], v: &[f64]| system.reference_energy(q, v).unwrap_or(f64::NAN);
    let reference_along = |field: &dyn LagrangianField, pred: &Prediction| -> Result<EnergyTrace> {
        let thin = thin_prediction(pred, stride);
        let with_v = legendre_velocities(field, &thin, opts);
        energy_trace(href, &thin.positions[..with_v.len()], Some(&with_v), thin.h)
    };
    let gp_thin = FlowPrediction {
        h: h * stride as f64,
        positions: gpflow_prediction.positions.iter().step_by(stride).cloned().collect(),
        velocities: gpflow_prediction.velocities.iter().step_by(stride).cloned().collect(),
    };
    let energy = (|| {
        Ok([
            ("gpflow".to_string(), energy_trace(href, &gp_thin.positions, Some(&gp_thin.velocities), gp_thin.h)?),
            ("lgp".to_string(), reference_along(&lgp, &lgp_prediction)?),
            ("lsi".to_string(), reference_along(&lsi_l2, &lsi_prediction)?),
        ])
    })()
    .stage("analyze energy")?;

    let grid = &config.potential_grid;
    let lgp_mod = numerical_lagrangian(&lgp)?;
    let contours = (|| {
        Ok(vec![
            ("reference".to_string(), contour_grid(&Energy(system.lagrangian()), grid)?),
            ("lsi".to_string(), contour_grid(&Energy(&lsi_l2), grid)?),
            ("lgp".to_string(), contour_grid(&Energy(&lgp_mod), grid)?),
        ])
    })()
    .stage("analyze contour")?;

    Ok(HenonHeilesRun {
        config: config.clone(),
        dataset,
        lsi,
        lgp,
        gpflow,
        lsi_prediction,
        lgp_prediction,
        gpflow_prediction,
        divergence,
        energy,
        contours,
    })
}

/// Every `stride`-th snapshot of a prediction, as a prediction with step `stride·h`.
pub fn thin_prediction(pred: &Prediction, stride: usize) -> Prediction {
    let stride = stride.max(1);
    Prediction {
        h: pred.h * stride as f64,
        positions: pred.positions.iter().step_by(stride).cloned().collect(),
        momenta: pred.momenta.iter().step_by(stride).cloned().collect(),
        velocities: pred.velocities.as_ref().map(|v| v.iter().step_by(stride).cloned().collect()),
        failure: pred.failure.clone(),
    }
}

impl HenonHeilesRun {
    pub fn summary(&self) -> HenonHeilesSummary {
        let system = BenchmarkSystem::HenonHeiles { alpha: self.config.alpha };
        let failures = [("lsi", &self.lsi_prediction), ("lgp", &self.lgp_prediction)]
            .iter()
            .filter_map(|(name, p)| p.failure.clone().map(|(j, e)| (name.to_string(), j, e)))
            .collect();
        HenonHeilesSummary {
            trajectories: self.dataset.trajectories.len(),
            triples: self.dataset.triple_count(),
            models: [("lsi".into(), (&self.lsi).into()), ("lgp".into(), (&self.lgp).into())],
            gpflow_epsilon: self.gpflow.kernel.epsilon,
            gpflow_log_marginal_likelihood: self.gpflow.log_marginal_likelihood,
            initial_energy: system.reference_energy(&self.config.q0, &self.config.qdot0).unwrap_or(f64::NAN),
            escape_energy: system.escape_energy().unwrap_or(f64::NAN),
            divergence: self.divergence.clone(),
            energy: self.energy.clone().map(|(name, t)| (name, (&t).into())),
            target_divergence: [("gpflow".into(), 1.4574e3), ("lgp".into(), 7.069e3), ("lsi".into(), 1.774e4)],
            failures,
        }
    }
}
