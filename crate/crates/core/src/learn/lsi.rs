use std::collections::HashSet;

use rayon::prelude::*;

use crate::discretize::{difference_quotient, midpoint, Scheme, Slot};
use crate::domain::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::kernel::{Kernel, Rbf};

use super::model::{KernelModel, ModelKind};
use super::{nontriviality_row, normalisation_row, LinearSystem, TrainConfig};

/// Points of `TQ` where the discrete Lagrangian of the data is evaluated.
///
/// Midpoint: one center per consecutive pair, duplicates kept. Trapezoidal: both
/// endpoints of every pair with the pair's difference quotient, exact duplicates
/// removed (first occurrence wins).
pub fn lsi_centers(dataset: &TrajectoryDataset, scheme: Scheme, h: f64) -> Result<Vec<Vec<f64>>> {
    if dataset.trajectories.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut centers = Vec::new();
    match scheme {
        Scheme::Midpoint => {
            for (q0, q1) in dataset.pairs() {
                let mut z = midpoint(q0, q1);
                z.extend(difference_quotient(q0, q1, h));
                centers.push(z);
            }
        }
        Scheme::Trapezoidal => {
            let mut seen = HashSet::new();
            for (q0, q1) in dataset.pairs() {
                let v = difference_quotient(q0, q1, h);
                for q in [q0, q1] {
                    let z: Vec<f64> = q.iter().chain(&v).copied().collect();
                    let key: Vec<u64> = z.iter().map(|x| x.to_bits()).collect();
                    if seen.insert(key) {
                        centers.push(z);
                    }
                }
            }
        }
    }
    Ok(centers)
}

/// `(1/h)·∇₂L_Δ(q_prev, q) + (1/h)·∇₁L_Δ(q, q_next)` for every basis function
/// `k(·, z_i)`, as an `n × M` row-major block.
fn del_block(
    kernel: &Rbf,
    scheme: Scheme,
    h: f64,
    centers: &[Vec<f64>],
    (qa, qb, qc): (&[f64], &[f64], &[f64]),
) -> Vec<f64> {
    let n = qa.len();
    let m = centers.len();
    let mut terms = scheme.stencil(qa, qb, h, Slot::Second);
    terms.extend(scheme.stencil(qb, qc, h, Slot::First));
    let points: Vec<(Vec<f64>, f64, f64)> = terms
        .into_iter()
        .map(|t| {
            let x: Vec<f64> = t.position.iter().chain(&t.velocity).copied().collect();
            (x, t.coef_q / h, t.coef_v / h)
        })
        .collect();
    let mut block = vec![0.0; n * m];
    for (i, z) in centers.iter().enumerate() {
        for (x, cq, cv) in &points {
            let g = kernel.gradient(x, z);
            for a in 0..n {
                block[a * m + i] += cq * g[a] + cv * g[n + a];
            }
        }
    }
    block
}

/// Data-consistency, non-triviality and normalisation rows for the LSI learner.
pub fn assemble_lsi_system(dataset: &TrajectoryDataset, config: &TrainConfig) -> Result<LinearSystem> {
    config.validate()?;
    if dataset.triple_count() == 0 {
        return Err(Error::NoTriples);
    }
    let n = dataset.n;
    let h = dataset.h;
    let centers = lsi_centers(dataset, config.scheme, h)?;
    let kernel = Rbf::new(config.kernel);
    let triples: Vec<_> = dataset.triples().collect();
    let blocks: Vec<Vec<f64>> =
        triples.par_iter().map(|&t| del_block(&kernel, config.scheme, h, &centers, t)).collect();
    let nontrivial = nontriviality_row(&kernel, n, &centers);
    let point = config.normalisation_point(n)?;
    let normalise = normalisation_row(&kernel, &point, &centers);
    Ok(LinearSystem::from_blocks(blocks, nontrivial, normalise, config.c, centers))
}

/// Trains an inverse modified Lagrangian for `config.scheme` from position triples.
pub fn train_lsi(dataset: &TrajectoryDataset, config: &TrainConfig) -> Result<KernelModel> {
    let system = assemble_lsi_system(dataset, config)?;
    let solution = system.solve(config.rcond)?;
    Ok(KernelModel {
        kind: ModelKind::Lsi,
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
    use crate::discretize::del_residual;
    use crate::domain::{Bounds, Trajectory};
    use crate::kernel::KernelParams;

    fn tiny_dataset(positions: Vec<Vec<f64>>, h: f64) -> TrajectoryDataset {
        let n = positions[0].len();
        TrajectoryDataset::new(
            n,
            h,
            Bounds::cube(2 * n, -1.0, 1.0).unwrap(),
            vec![Trajectory::new(positions, h).unwrap()],
        )
        .unwrap()
    }

    fn config(scheme: Scheme) -> TrainConfig {
        TrainConfig::new(KernelParams::new(1.0, 1.0).unwrap(), scheme)
    }

    #[test]
    fn center_counts() {
        let ds = tiny_dataset(vec![vec![0.0], vec![0.1], vec![0.3]], 0.1);
        assert_eq!(lsi_centers(&ds, Scheme::Midpoint, 0.1).unwrap().len(), 2);
        let ds = tiny_dataset(vec![vec![0.0], vec![0.1], vec![0.2]], 0.1);
        // Endpoints share positions and velocities: (0,1),(0.1,1),(0.1,1)dup,(0.2,1).
        let z = lsi_centers(&ds, Scheme::Trapezoidal, 0.1).unwrap();
        assert_eq!(z.len(), 3);
    }

    #[test]
    fn midpoint_keeps_duplicate_centers() {
        let ds = tiny_dataset(vec![vec![0.0], vec![0.1], vec![0.0], vec![0.1]], 0.1);
        let z = lsi_centers(&ds, Scheme::Midpoint, 0.1).unwrap();
        assert_eq!(z.len(), 3);
        assert_eq!(z[0], z[2]);
    }

    #[test]
    fn system_shape_and_row_weights() {
        let ds = tiny_dataset(vec![vec![0.0], vec![0.1], vec![0.25], vec![0.3]], 0.1);
        let sys = assemble_lsi_system(&ds, &config(Scheme::Midpoint)).unwrap();
        assert_eq!(sys.matrix.shape(), (2 + 2, 3));
        assert_eq!(sys.rhs[2], 1.0);
        assert_eq!(sys.rhs[3], 0.0);
        // Oracle for the non-triviality row: 1/4 Σ_corners ∂k/∂q̇.
        let k = Rbf::new(KernelParams::new(1.0, 1.0).unwrap());
        let z = &sys.centers[1];
        let expect: f64 =
            [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]].iter().map(|c| k.gradient(c, z)[1]).sum::<f64>() / 4.0;
        assert!((sys.matrix[(2, 1)] - expect).abs() < 1e-15);
        assert!((sys.matrix[(3, 1)] - k.value(&[0.0, 0.0], z)).abs() < 1e-15);
    }

    #[test]
    fn rows_equal_scaled_del_residual_of_basis_functions() {
        // Row entry (r, i) must equal (1/h)·DEL residual of the single-center model k(·, z_i).
        for scheme in [Scheme::Midpoint, Scheme::Trapezoidal] {
            let h = 0.2;
            let ds = tiny_dataset(vec![vec![0.0, 0.1], vec![0.15, 0.05], vec![0.2, -0.1], vec![0.3, -0.3]], h);
            let cfg = TrainConfig::new(KernelParams::new(0.7, 1.3).unwrap(), scheme);
            let sys = assemble_lsi_system(&ds, &cfg).unwrap();
            for (i, z) in sys.centers.iter().enumerate() {
                let single = KernelModel {
                    kind: ModelKind::Lsi,
                    scheme,
                    h,
                    n: 2,
                    kernel: cfg.kernel,
                    c: 1.0,
                    normalisation_point: vec![0.0; 4],
                    centers: vec![z.clone()],
                    coefficients: vec![1.0],
                    diagnostics: crate::learn::SolveDiagnostics { rank: 0, residual: 0.0 },
                };
                for (t, (a, b, c)) in ds.triples().enumerate() {
                    let r = del_residual(&single, scheme, a, b, c, h).unwrap();
                    for comp in 0..2 {
                        let entry = sys.matrix[(2 * t + comp, i)];
                        assert!((entry - r[comp] / h).abs() < 1e-13, "{scheme} t={t} i={i}");
                    }
                }
            }
        }
    }

    #[test]
    fn needs_triples() {
        let ds = tiny_dataset(vec![vec![0.0], vec![0.1]], 0.1);
        assert!(matches!(assemble_lsi_system(&ds, &config(Scheme::Midpoint)), Err(Error::NoTriples)));
    }
}
