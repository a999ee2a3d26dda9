mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use soilmap::data::{Location, Observation, TaskId, TaskPoint};
use soilmap::gp::{lml_gradient, lml_gradient_fd, log_marginal_likelihood, GpError, HyperParams, FD_STEP};
use soilmap::kernels::{KernelMode, DEFAULT_NOISE_FLOOR};

fn mode_of(convolved: bool) -> KernelMode {
    if convolved {
        KernelMode::Convolved
    } else {
        KernelMode::Icm
    }
}

/// Random well-conditioned instance; redraws until the oracle covariance is
/// comfortably positive definite.
fn instance(seed: u64, mode: KernelMode, max_m: usize) -> (HyperParams, soilmap::data::Dataset, Vec<TaskPoint>) {
    let mut rng = rng(seed);
    loop {
        let n = rng.random_range(1..=3);
        let m = rng.random_range(n + 1..=max_m);
        let points = heterotopic_points(&mut rng, n, m, 100.0, 100.0);
        let theta = random_theta(&mut rng, n, mode, MODERATE);
        let (factor, spatial, noise) = theta.unpack();
        let k = oracle_cov(&points, factor.task_cov().matrix(), spatial.lengthscales(), noise.variances(), mode);
        if k.symmetric_eigen().eigenvalues.min() < 1e-6 {
            continue;
        }
        let values: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let data = dataset_from(&points, &values, n);
        if log_marginal_likelihood(&theta, &data).is_ok() {
            return (theta, data, points);
        }
    }
}

#[test]
fn single_point_standard_normal() {
    let lower = DMatrix::from_element(1, 1, 0.5f64.sqrt());
    let theta = theta_from_parts(&lower, &[3.0], &[0.5], KernelMode::Icm);
    let data = dataset_from(&[TaskPoint::new(TaskId(0), Location::new(1.0, 2.0))], &[0.0], 1);
    let lml = log_marginal_likelihood(&theta, &data).unwrap();
    assert!((lml + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
}

#[test]
fn doubling_noise_changes_lml() {
    let (theta, data, _) = instance(4, KernelMode::Icm, 12);
    let (factor, spatial, noise) = theta.unpack();
    let doubled: Vec<f64> = noise.variances().iter().map(|v| 2.0 * v).collect();
    let theta2 = theta_from_parts(&factor.lower(), spatial.lengthscales(), &doubled, KernelMode::Icm);
    let a = log_marginal_likelihood(&theta, &data).unwrap();
    let b = log_marginal_likelihood(&theta2, &data).unwrap();
    assert!((a - b).abs() > 1e-6);
}

#[test]
fn fd_gradient_is_central_difference_of_lml() {
    let (theta, data, _) = instance(9, KernelMode::Convolved, 15);
    let fd = lml_gradient_fd(&theta, &data, FD_STEP).unwrap();
    let layout = theta.layout();
    for (i, g) in fd.iter().enumerate() {
        let shifted = |h: f64| {
            let mut v = theta.values().to_vec();
            v[i] += h;
            log_marginal_likelihood(&HyperParams::from_values(layout, v).unwrap(), &data).unwrap()
        };
        let manual = (shifted(FD_STEP) - shifted(-FD_STEP)) / (2.0 * FD_STEP);
        assert!((g - manual).abs() <= 1e-12 * manual.abs().max(1.0));
    }
}

#[test]
fn indefinite_signal_covariance_is_rejected() {
    // Unit-amplitude convolved kernel with mixed length-scales is indefinite
    // on this lattice; heavy noise would otherwise hide it.
    let lower = DMatrix::identity(4, 4);
    let ls = [42.0, 63.0, 60.0, 37.0];
    let kc = DMatrix::from_element(4, 4, 1.0);
    let l = (kc + DMatrix::identity(4, 4) * 1e-9).cholesky().unwrap().l();
    let theta = theta_from_parts(&l, &ls, &[1.0; 4], KernelMode::Convolved);
    let data = soilmap::gp::sample_prior(&theta_from_parts(&lower, &ls, &[1.0; 4], KernelMode::Convolved), &grid30(), 1)
        .unwrap();
    assert_eq!(log_marginal_likelihood(&theta, &data), Err(GpError::Rejected));

    let icm = theta_from_parts(&l, &[50.0], &[1.0; 4], KernelMode::Icm);
    assert!(log_marginal_likelihood(&icm, &data).is_ok());
}

#[test]
fn task_count_mismatch_is_an_error() {
    let (theta, _, _) = instance(1, KernelMode::Icm, 8);
    let other = dataset_from(
        &[TaskPoint::new(TaskId(0), Location::new(0.0, 0.0)), TaskPoint::new(TaskId(1), Location::new(1.0, 0.0)), TaskPoint::new(TaskId(2), Location::new(2.0, 0.0)), TaskPoint::new(TaskId(3), Location::new(3.0, 0.0))],
        &[0.0; 4],
        4,
    );
    assert!(matches!(
        log_marginal_likelihood(&theta, &other),
        Err(GpError::TaskCountMismatch { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lml_matches_dense_oracle(seed in 0u64..10_000, convolved in any::<bool>()) {
        let mode = mode_of(convolved);
        let (theta, data, points) = instance(seed, mode, 20);
        let (factor, spatial, noise) = theta.unpack();
        let k = oracle_cov(&points, factor.task_cov().matrix(), spatial.lengthscales(), noise.variances(), mode);
        let oracle = dense_mvn_logpdf(&k, &DVector::from_vec(data.values()));
        let lml = log_marginal_likelihood(&theta, &data).unwrap();
        prop_assert!((lml - oracle).abs() <= 1e-8, "{} vs {}", lml, oracle);
    }

    #[test]
    fn analytic_gradient_matches_fd(seed in 0u64..10_000, convolved in any::<bool>()) {
        let (theta, data, _) = instance(seed, mode_of(convolved), 16);
        let g = lml_gradient(&theta, &data).unwrap();
        let fd = lml_gradient_fd(&theta, &data, FD_STEP).unwrap();
        let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = fd.iter().map(|b| b * b).sum::<f64>().sqrt().max(1e-8);
        prop_assert!(diff / scale <= 1e-4, "relative error {}", diff / scale);
    }

    #[test]
    fn lml_is_translation_invariant(seed in 0u64..10_000, dx in -1e3f64..1e3, dy in -1e3f64..1e3) {
        let (theta, data, _) = instance(seed, KernelMode::Convolved, 12);
        let moved: Vec<Observation> = data
            .observations()
            .iter()
            .map(|o| Observation::new(o.sample_id.clone(), Location::new(o.location.x + dx, o.location.y + dy), o.task, o.value))
            .collect();
        let moved = soilmap::data::Dataset::new(moved, data.n_tasks()).unwrap();
        let a = log_marginal_likelihood(&theta, &data).unwrap();
        let b = log_marginal_likelihood(&theta, &moved).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn lml_ignores_observation_order(seed in 0u64..10_000, convolved in any::<bool>()) {
        let (theta, data, _) = instance(seed, mode_of(convolved), 14);
        let mut obs = data.observations().to_vec();
        obs.reverse();
        let reordered = soilmap::data::Dataset::new(obs, data.n_tasks()).unwrap();
        let a = log_marginal_likelihood(&theta, &data).unwrap();
        let b = log_marginal_likelihood(&theta, &reordered).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn noise_never_drops_below_floor(raw in -50.0f64..5.0) {
        let layout = soilmap::gp::ThetaLayout::new(1, KernelMode::Icm, DEFAULT_NOISE_FLOOR);
        let theta = HyperParams::from_values(layout, vec![0.0, 3.0, raw]).unwrap();
        prop_assert!(theta.noise().get(0) >= DEFAULT_NOISE_FLOOR);
    }
}
