mod common;

use sigmix::em::{em_fit, EmOptions};
use sigmix::signal_io::{generate_mixture_samples, SyntheticComponent, SyntheticSpec};

use common::*;

fn two_blobs(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        components: vec![
            SyntheticComponent { weight: 0.5, mean: vec![-4.0, 1.0], cov: vec![vec![1.0, 0.2], vec![0.2, 0.6]] },
            SyntheticComponent { weight: 0.5, mean: vec![4.0, -1.0], cov: vec![vec![0.7, 0.0], vec![0.0, 1.2]] },
        ],
        sample_count: 800,
        seed,
    }
}

#[test]
fn recovers_two_separated_clusters() {
    for seed in 0..5 {
        let spec = two_blobs(seed);
        let (data, _) = generate_mixture_samples(&spec).unwrap();
        let (m, _) = em_fit(&data, 2, &EmOptions { seed, ..Default::default() }).unwrap();
        assert!(recovered(&spec, &m, 0.2), "seed {seed}: {:?}", m.components());
    }
}

#[test]
fn log_likelihood_never_drops() {
    for seed in 0..5 {
        let mut r = rng(seed);
        let data = clustered_data(&mut r, 400, 3, 5);
        for k in [2, 4, 8] {
            let (_, trace) = em_fit(&data, k, &EmOptions { seed, ..Default::default() }).unwrap();
            assert!(trace.windows(2).all(|w| w[1] >= w[0] - 1e-8), "seed {seed} k {k}");
        }
    }
}

#[test]
fn deterministic_for_fixed_seed() {
    let mut r = rng(1);
    let data = clustered_data(&mut r, 300, 2, 3);
    let opts = EmOptions { seed: 3, ..Default::default() };
    assert_eq!(em_fit(&data, 5, &opts).unwrap(), em_fit(&data, 5, &opts).unwrap());
}
