mod common;

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sigmix::byy::{
    annealed_objective, anneal_fit, harmony, initialize, posterior, update_parameters,
    recovery_experiment, AnnealConfig, Responsibilities,
};
use sigmix::signal_io::generate_mixture_samples;
use sigmix::em::e_step;
use sigmix::mixture::CovarianceFloor;
use sigmix::{Dataset, GaussianComponent, MixtureModel};

use common::*;

#[test]
fn harmony_and_objective_match_double_sums() {
    for seed in 0..20 {
        let (data, m) = small_fixture(seed);
        assert_relative_eq!(harmony(&data, &m).unwrap(), harmony_oracle(&data, &m), epsilon = 1e-10);
        for lambda in [0.0, 0.05, 0.3, 0.7, 1.0] {
            assert_relative_eq!(
                annealed_objective(&data, &m, lambda).unwrap(),
                annealed_oracle(&data, &m, lambda),
                epsilon = 1e-10
            );
        }
    }
}

#[test]
fn unit_lambda_single_component_has_no_entropy() {
    let mut r = rng(3);
    let data = random_data(&mut r, 9, 2, 2.0);
    let m = random_model(&mut r, 1, 2, 1.0);
    assert_eq!(annealed_objective(&data, &m, 1.0).unwrap(), harmony(&data, &m).unwrap());
}

#[test]
fn low_temperature_posterior_is_nearly_hard() {
    // Two components whose weighted densities differ by a clear factor at every sample.
    let m = MixtureModel::new(vec![
        GaussianComponent::new(0.5, DVector::from_column_slice(&[-2.0]), DMatrix::from_element(1, 1, 1.0)).unwrap(),
        GaussianComponent::new(0.5, DVector::from_column_slice(&[2.0]), DMatrix::from_element(1, 1, 1.0)).unwrap(),
    ])
    .unwrap();
    let data = Dataset::new(6, 1, vec![-3.0, -1.0, -0.2, 0.2, 1.5, 4.0]).unwrap();
    let p = posterior(&data, &m, 0.01).unwrap();
    let oracle = posterior_oracle(&data, &m, 0.01);
    for (t, row) in oracle.iter().enumerate() {
        let winner = if data.row(t)[0] < 0.0 { 0 } else { 1 };
        assert!(p.get(t, winner) >= 1.0 - 1e-6);
        for j in 0..2 {
            assert!((p.get(t, j) - row[j]).abs() <= 1e-12);
        }
    }
}

#[test]
fn posterior_rejects_non_positive_lambda() {
    let (data, m) = small_fixture(1);
    assert!(posterior(&data, &m, 0.0).is_err());
    assert!(posterior(&data, &m, -1.0).is_err());
}

#[test]
fn four_point_update_matches_hand_computation() {
    let data = Dataset::from_rows(&[[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]]).unwrap();
    let resp = Responsibilities::from_rows(&[[1.0, 0.0], [0.5, 0.5], [0.5, 0.5], [0.0, 1.0]]).unwrap();
    let prev = initialize(&data, 2, 0, &CovarianceFloor::default()).unwrap();
    let m = update_parameters(&data, &resp, &prev, &CovarianceFloor::default()).unwrap();

    let hand_cov = [[0.75, -0.25], [-0.25, 0.75]];
    let expected = [(0.5, [0.5, 0.5]), (0.5, [1.5, 1.5])];
    for (c, (w, mean)) in m.components().iter().zip(expected) {
        assert_relative_eq!(c.weight, w, epsilon = 1e-15);
        for a in 0..2 {
            assert_relative_eq!(c.mean[a], mean[a], epsilon = 1e-15);
            for b in 0..2 {
                assert_relative_eq!(c.cov[(a, b)], hand_cov[a][b], epsilon = 1e-15);
            }
        }
    }
}

#[test]
fn e_step_equals_unit_temperature_posterior() {
    for seed in 0..10 {
        let mut r = rng(100 + seed);
        let data = clustered_data(&mut r, 200, 3, 3);
        let m = random_model(&mut r, 4, 3, 5.0);
        let (resp, _) = e_step(&data, &m).unwrap();
        let p = posterior(&data, &m, 1.0).unwrap();
        for t in 0..data.len() {
            for j in 0..m.k() {
                assert!((resp.get(t, j) - p.get(t, j)).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn unit_temperature_iterates_match_em() {
    for seed in 0..3 {
        let gap = em_equivalence_gap(seed, 40);
        assert!(gap <= 1e-10, "seed {seed}: gap {gap:e}");
    }
}

#[test]
fn single_gaussian_keeps_its_one_component() {
    let spec = sigmix::signal_io::SyntheticSpec {
        components: vec![sigmix::signal_io::SyntheticComponent {
            weight: 1.0,
            mean: vec![1.0, -2.0],
            cov: vec![vec![2.0, 0.5], vec![0.5, 1.0]],
        }],
        sample_count: 400,
        seed: 9,
    };
    let (data, _) = sigmix::signal_io::generate_mixture_samples(&spec).unwrap();
    let cfg = AnnealConfig { k_init: 1, ..Default::default() };
    let (m, trace) = anneal_fit(&data, &cfg).unwrap();
    assert_eq!(m.k(), 1);
    assert!(trace.records.iter().all(|r| r.k == 1));
    let c = &m.components()[0];
    let mean = data.mean();
    let cov = data.covariance();
    for a in 0..2 {
        assert_relative_eq!(c.mean[a], mean[a], epsilon = 1e-12);
        for b in 0..2 {
            assert_relative_eq!(c.cov[(a, b)], cov[(a, b)], epsilon = 1e-12);
        }
    }
}

#[test]
fn trace_is_well_formed() {
    let mut r = rng(21);
    let data = clustered_data(&mut r, 300, 2, 3);
    let cfg = AnnealConfig { k_init: 8, ..Default::default() };
    let (m, trace) = anneal_fit(&data, &cfg).unwrap();
    let lambdas: Vec<f64> = trace.records.iter().map(|r| r.lambda).collect();
    assert_eq!(lambdas, cfg.schedule());
    assert!(lambdas.windows(2).all(|w| w[1] < w[0]));
    assert!(trace.records.iter().all(|r| r.k <= cfg.k_init));
    assert!(trace.records.windows(2).all(|w| w[1].k <= w[0].k));
    assert_eq!(trace.records.last().unwrap().k, m.k());
    let csv = trace.to_csv();
    assert!(csv.starts_with("iteration,lambda,k,L,L_lambda\n"));
    assert_eq!(csv.lines().count(), trace.records.len() + 1);
}

#[test]
fn anneal_fit_is_deterministic() {
    let mut r = rng(22);
    let data = clustered_data(&mut r, 200, 2, 2);
    let cfg = AnnealConfig { k_init: 6, seed: 4, ..Default::default() };
    let (a, _) = anneal_fit(&data, &cfg).unwrap();
    let (b, _) = anneal_fit(&data, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn anneal_fit_needs_more_samples_than_components() {
    let data = Dataset::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
    let cfg = AnnealConfig { k_init: 3, ..Default::default() };
    assert!(anneal_fit(&data, &cfg).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn one_cycle_never_lowers_the_objective(seed in any::<u64>(), lambda in 0.02f64..=1.0) {
        let (before, after) = one_cycle(seed, lambda);
        prop_assert!(after >= before - 1e-8, "{before} -> {after}");
    }
}

#[test]
fn recovery_experiment_agrees_with_direct_check() {
    let spec = three_gaussians(0, 1000);
    let cfg = AnnealConfig { k_init: 10, ..Default::default() };
    let runs = recovery_experiment(&spec, &cfg, 4, 0.2).unwrap();
    for run in &runs {
        let i = run.run as u64;
        let (data, _) = generate_mixture_samples(&three_gaussians(i, 1000)).unwrap();
        let (m, _) = anneal_fit(&data, &AnnealConfig { seed: i, ..cfg.clone() }).unwrap();
        assert_eq!((run.data_seed, run.fit_seed, run.k), (i, i, m.k()));
        assert_eq!(run.recovered, recovered(&spec, &m, 0.2), "run {i}");
    }
}
