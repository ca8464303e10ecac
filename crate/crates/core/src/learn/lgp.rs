use rayon::prelude::*;

use crate::datagen::{central_differences, halton_vectors};
use crate::domain::{BenchmarkSystem, Bounds, State, TrajectoryDataset};
use crate::error::{check_dim, Error, Result};
use crate::kernel::{Kernel, KernelAccumulator, Rbf};

use super::model::{KernelModel, ModelKind};
use super::{nontriviality_row, normalisation_row, LinearSystem, TrainConfig};

/// Where the LGP learner gets velocities and accelerations from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LgpMode {
    /// Central differences of the position data; endpoints are dropped.
    FiniteDifference,
    /// Every dataset position, Halton velocities over the dataset's velocity
    /// box, and accelerations from the true equations of motion.
    Exact(BenchmarkSystem),
}

/// Training states for the given mode.
pub fn lgp_states(dataset: &TrajectoryDataset, mode: LgpMode) -> Result<Vec<State>> {
    match mode {
        LgpMode::FiniteDifference => {
            let mut states = Vec::new();
            for traj in &dataset.trajectories {
                states.extend(central_differences(traj)?);
            }
            Ok(states)
        }
        LgpMode::Exact(system) => {
            let n = dataset.n;
            check_dim(system.dim(), n)?;
            let velocity_box = Bounds::new(dataset.domain.lower[n..].to_vec(), dataset.domain.upper[n..].to_vec())?;
            let positions: Vec<&Vec<f64>> = dataset.trajectories.iter().flat_map(|t| t.positions.iter()).collect();
            let velocities = halton_vectors(positions.len(), &velocity_box)?;
            Ok(positions
                .into_iter()
                .zip(velocities)
                .map(|(q, v)| State { q: q.clone(), qdot: Some(v), qddot: Some(system.force(q)) })
                .collect())
        }
    }
}

/// Euler–Lagrange rows `∇_q k − D²_{q̇q}k·q̇ − D²_{q̇q̇}k·q̈` at every state, one
/// column per center, followed by the non-triviality and normalisation rows.
pub fn assemble_lgp_system(states: &[State], config: &TrainConfig) -> Result<LinearSystem> {
    config.validate()?;
    let first = states.first().ok_or(Error::EmptyDataset)?;
    let n = first.q.len();
    let mut centers = Vec::with_capacity(states.len());
    let mut data = Vec::with_capacity(states.len());
    for s in states {
        check_dim(n, s.q.len())?;
        let (Some(v), Some(a)) = (&s.qdot, &s.qddot) else {
            return Err(Error::MissingDerivatives);
        };
        check_dim(n, v.len())?;
        check_dim(n, a.len())?;
        centers.push(s.q.iter().chain(v).copied().collect::<Vec<f64>>());
        data.push((v.as_slice(), a.as_slice()));
    }
    let kernel = Rbf::new(config.kernel);
    let m = centers.len();
    let d = 2 * n;
    let blocks: Vec<Vec<f64>> = centers
        .par_iter()
        .zip(data.par_iter())
        .map(|(x, (v, acc))| {
            let mut block = vec![0.0; n * m];
            for (i, z) in centers.iter().enumerate() {
                let mut k = KernelAccumulator::new(d);
                kernel.accumulate(x, z, 1.0, &mut k, true);
                for a in 0..n {
                    let row = (n + a) * d;
                    let mut entry = k.grad[a];
                    for b in 0..n {
                        entry -= k.hess[row + b] * v[b] + k.hess[row + n + b] * acc[b];
                    }
                    block[a * m + i] = entry;
                }
            }
            block
        })
        .collect();
    let nontrivial = nontriviality_row(&kernel, n, &centers);
    let point = config.normalisation_point(n)?;
    let normalise = normalisation_row(&kernel, &point, &centers);
    Ok(LinearSystem::from_blocks(blocks, nontrivial, normalise, config.c, centers))
}

/// Trains a kernel approximation of the exact Lagrangian.
///
/// The stored scheme and step size describe the integrator the model is meant
/// to be used with; they do not enter the fit.
pub fn train_lgp(dataset: &TrajectoryDataset, config: &TrainConfig, mode: LgpMode) -> Result<KernelModel> {
    let states = lgp_states(dataset, mode)?;
    let system = assemble_lgp_system(&states, config)?;
    let solution = system.solve(config.rcond)?;
    Ok(KernelModel {
        kind: match mode {
            LgpMode::FiniteDifference => ModelKind::Lgp,
            LgpMode::Exact(_) => ModelKind::LgpExact,
        },
        scheme: config.scheme,
        h: dataset.h,
        n: dataset.n,
        kernel: config.kernel,
        c: config.c,
        normalisation_point: config.normalisation_point(dataset.n)?,
        centers: system.centers,
        coefficients: solution.x.iter().copied().collect(),
        diagnostics: solution.diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::Scheme;
    use crate::domain::Trajectory;
    use crate::field::LagrangianField;
    use crate::kernel::KernelParams;

    fn dataset(trajs: Vec<Vec<Vec<f64>>>, h: f64) -> TrajectoryDataset {
        let n = trajs[0][0].len();
        TrajectoryDataset::new(
            n,
            h,
            Bounds::cube(2 * n, -1.2, 1.2).unwrap(),
            trajs.into_iter().map(|p| Trajectory::new(p, h).unwrap()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn shape_has_one_column_per_state() {
        let states: Vec<State> = (0..5)
            .map(|i| {
                let x = i as f64 * 0.1;
                State::new(vec![x, -x], Some(vec![0.2, x]), Some(vec![0.0, 0.1])).unwrap()
            })
            .collect();
        let cfg = TrainConfig::new(KernelParams::new(1.0, 1.0).unwrap(), Scheme::Midpoint);
        let sys = assemble_lgp_system(&states, &cfg).unwrap();
        assert_eq!(sys.matrix.shape(), (2 * 5 + 2, 5));
        assert_eq!(sys.data_rows, 10);
    }

    #[test]
    fn rows_are_euler_lagrange_residuals_of_basis_functions() {
        // Oracle: the EL residual of a single-center model, built from its analytic jet.
        let states = vec![
            State::new(vec![0.3, -0.1], Some(vec![0.5, 0.2]), Some(vec![-0.3, 0.7])).unwrap(),
            State::new(vec![-0.4, 0.2], Some(vec![0.1, -0.6]), Some(vec![0.2, 0.1])).unwrap(),
        ];
        let cfg = TrainConfig::new(KernelParams::new(0.8, 1.2).unwrap(), Scheme::Midpoint);
        let sys = assemble_lgp_system(&states, &cfg).unwrap();
        for (i, z) in sys.centers.iter().enumerate() {
            let single = KernelModel {
                kind: ModelKind::Lgp,
                scheme: Scheme::Midpoint,
                h: 0.1,
                n: 2,
                kernel: cfg.kernel,
                c: 1.0,
                normalisation_point: vec![0.0; 4],
                centers: vec![z.clone()],
                coefficients: vec![1.0],
                diagnostics: crate::learn::SolveDiagnostics { rank: 0, residual: 0.0 },
            };
            for (j, s) in states.iter().enumerate() {
                let v = s.qdot.as_ref().unwrap();
                let a = s.qddot.as_ref().unwrap();
                let jet = single.jet(&s.q, v);
                let v = nalgebra::DVector::from_column_slice(v);
                let a = nalgebra::DVector::from_column_slice(a);
                let el = &jet.dq - &jet.dvq * &v - &jet.dvv * &a;
                for c in 0..2 {
                    assert!((sys.matrix[(2 * j + c, i)] - el[c]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn missing_derivatives_rejected() {
        let cfg = TrainConfig::new(KernelParams::new(1.0, 1.0).unwrap(), Scheme::Midpoint);
        let states = vec![State::new(vec![0.0], None, None).unwrap()];
        assert!(matches!(assemble_lgp_system(&states, &cfg), Err(Error::MissingDerivatives)));
        assert!(matches!(assemble_lgp_system(&[], &cfg), Err(Error::EmptyDataset)));
    }

    #[test]
    fn finite_difference_states_drop_endpoints() {
        let ds = dataset(vec![vec![vec![0.0], vec![0.1], vec![0.3], vec![0.6]]], 0.1);
        let states = lgp_states(&ds, LgpMode::FiniteDifference).unwrap();
        assert_eq!(states.len(), 2);
        assert_eq!(states[0].q, vec![0.1]);
    }

    #[test]
    fn exact_states_use_every_position() {
        let ds = dataset(vec![vec![vec![0.0], vec![0.1], vec![0.3]], vec![vec![1.0], vec![0.9], vec![0.7]]], 0.5);
        let states = lgp_states(&ds, LgpMode::Exact(BenchmarkSystem::Pendulum)).unwrap();
        assert_eq!(states.len(), 6);
        assert_eq!(states[0].qdot.as_ref().unwrap(), &vec![0.0]);
        assert_eq!(states[3].qddot.as_ref().unwrap(), &vec![-(1.0f64).sin()]);
    }

    #[test]
    fn minimal_dataset_trains() {
        let ds = dataset(vec![vec![vec![0.0], vec![0.1], vec![0.25]]], 0.1);
        let cfg = TrainConfig::new(KernelParams::new(1.0, 1.0).unwrap(), Scheme::Midpoint);
        let m = train_lgp(&ds, &cfg, LgpMode::FiniteDifference).unwrap();
        assert_eq!(m.centers.len(), 1);
        assert_eq!(m.kind, ModelKind::Lgp);
    }
}
