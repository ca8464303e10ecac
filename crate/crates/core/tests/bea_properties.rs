use lsi_core::bea::{bea_correct, correction_from_jet, BeaDirection};
use lsi_core::datagen::reference_flow;
use lsi_core::discretize::initial_step;
use lsi_core::field::Jet;
use lsi_core::{BenchmarkSystem, LagrangianField, NewtonOptions, Scheme};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const SCHEMES: [Scheme; 2] = [Scheme::Midpoint, Scheme::Trapezoidal];

fn systems() -> [BenchmarkSystem; 2] {
    [BenchmarkSystem::Pendulum, BenchmarkSystem::HenonHeiles { alpha: 0.8 }]
}

fn observed_order(hs: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / xs.len() as f64, ys.iter().sum::<f64>() / ys.len() as f64);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn sample_points(n: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..7)
        .map(|k| {
            let t = k as f64;
            let q = (0..n).map(|i| 0.5 * (0.7 * t + 1.3 * i as f64).sin()).collect();
            let v = (0..n).map(|i| 0.6 * (1.1 * t - 0.4 * i as f64).cos()).collect();
            (q, v)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    /// For one degree of freedom the correction is
    /// `h²/24·((L_q − L_{q̇q}q̇)²/L_{q̇q̇} + s·q̇²·L_qq)`.
    #[test]
    fn scalar_case_matches_closed_form(
        lq in -3.0..3.0f64,
        lqq in -3.0..3.0f64,
        lvq in -3.0..3.0f64,
        lvv in prop_oneof![-4.0..-0.25f64, 0.25..4.0f64],
        v in -2.0..2.0f64,
        h in 0.01..1.0f64,
    ) {
        let jet = Jet {
            value: 0.0,
            dq: DVector::from_element(1, lq),
            dv: DVector::from_element(1, 0.3),
            dqq: DMatrix::from_element(1, 1, lqq),
            dvq: DMatrix::from_element(1, 1, lvq),
            dvv: DMatrix::from_element(1, 1, lvv),
        };
        for (scheme, s) in [(Scheme::Midpoint, -1.0), (Scheme::Trapezoidal, 2.0)] {
            let g = lq - lvq * v;
            let expected = h * h / 24.0 * (g * g / lvv + s * v * v * lqq);
            let got = correction_from_jet(&jet, &[v], scheme, h).unwrap();
            prop_assert!((got - expected).abs() <= 1e-12 * expected.abs().max(1.0), "{scheme}: {got} vs {expected}");
        }
    }
}

#[test]
fn inverse_and_forward_corrections_cancel() {
    for system in systems() {
        let n = system.dim();
        for scheme in SCHEMES {
            let down = bea_correct(system.lagrangian(), scheme, 0.3, 2, BeaDirection::ExactToInverse).unwrap();
            let up = bea_correct(system.lagrangian(), scheme, 0.3, 2, BeaDirection::InverseToExact).unwrap();
            for (q, v) in sample_points(n) {
                let sum = down.correction(&q, &v).unwrap() + up.correction(&q, &v).unwrap();
                assert_eq!(sum, 0.0, "{system:?} {scheme}");
            }
        }
    }
}

/// Inverting and re-correcting returns the original Lagrangian up to O(h⁴).
#[test]
fn round_trip_deviation_is_fourth_order() {
    for system in systems() {
        let n = system.dim();
        for scheme in SCHEMES {
            let deviation = |h: f64| {
                let inverse = bea_correct(system.lagrangian(), scheme, h, 2, BeaDirection::ExactToInverse).unwrap();
                let back = bea_correct(inverse, scheme, h, 2, BeaDirection::InverseToExact).unwrap();
                let l = system.lagrangian();
                sample_points(n).iter().map(|(q, v)| (back.value(q, v) - l.value(q, v)).abs()).fold(0.0, f64::max)
            };
            let ratio = deviation(0.2) / deviation(0.1);
            assert!((16.0 * 0.7..=16.0 * 1.3).contains(&ratio), "{system:?} {scheme}: ratio {ratio}");
        }
    }
}

/// One midpoint step of the inverse modified Lagrangian follows the exact
/// flow to O(h⁵); the uncorrected Lagrangian only to O(h³).
///
/// The step starts from the exact state at t = 1 of the motion from the given
/// initial condition. Starting at rest would cancel the odd error terms and
/// raise both orders by one.
#[test]
fn corrected_lagrangian_shadows_the_exact_flow() {
    let opts = NewtonOptions::default();
    let hs = [0.4, 0.2, 0.1, 0.05];
    for system in systems() {
        let (q0, v0) = match system {
            BenchmarkSystem::Pendulum => (vec![0.3], vec![0.0]),
            BenchmarkSystem::HenonHeiles { .. } => (vec![0.3, -0.2], vec![0.1, 0.25]),
        };
        let force = |q: &[f64]| system.force(q);
        let (qs, vs) = reference_flow(force, &q0, &v0, 1.0, 1, 4000).pop().unwrap();
        let l = system.lagrangian();
        let one_step_error = |h: f64, order: usize| {
            let disc =
                bea_correct(system.lagrangian(), Scheme::Midpoint, h, order, BeaDirection::ExactToInverse).unwrap();
            let (q1, _) = initial_step(&disc, &l, &qs, &vs, h, Scheme::Midpoint, &opts).unwrap();
            let exact = reference_flow(force, &qs, &vs, h, 1, 4000).pop().unwrap().0;
            q1.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let corrected: Vec<f64> = hs.iter().map(|&h| one_step_error(h, 2)).collect();
        let plain: Vec<f64> = hs.iter().map(|&h| one_step_error(h, 0)).collect();
        let (oc, op) = (observed_order(&hs, &corrected), observed_order(&hs, &plain));
        assert!((4.5..=5.5).contains(&oc), "{system:?}: corrected order {oc}, errors {corrected:?}");
        assert!((2.5..=3.5).contains(&op), "{system:?}: uncorrected order {op}, errors {plain:?}");
    }
}
