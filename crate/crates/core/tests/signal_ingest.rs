use proptest::prelude::*;
use sigmix::signal_io::{
    generate_mixture_samples, parse_svc2004, serialize_svc2004, SyntheticComponent, SyntheticSpec,
};
use sigmix::{Error, Genuineness, RawSample, RawSignature};

const FIXTURE: &str = include_str!("fixtures/three_points.txt");

#[test]
fn three_line_fixture_matches_transcription() {
    let sig = parse_svc2004(FIXTURE).unwrap();
    // transcribed by hand from fixtures/three_points.txt
    let expected = [
        (2933.0, 5678.0, 31275775.0, true, 1550.0, 710.0, 0.0),
        (2940.0, 5690.0, 31275785.0, false, 1560.0, 700.0, 312.0),
        (2951.0, 5702.0, 31275795.0, false, 1570.0, 690.0, 420.0),
    ];
    assert_eq!(sig.len(), 3);
    for (s, e) in sig.samples().iter().zip(expected) {
        assert_eq!((s.x, s.y, s.t, s.pen_up, s.azimuth, s.altitude, s.pressure), e);
    }
    assert_eq!(sig.genuineness, Genuineness::Unknown);
}

#[test]
fn single_pen_up_line() {
    let sig = parse_svc2004("1\n2933 5678 31275775 0 1550 710 0").unwrap();
    assert_eq!(sig.len(), 1);
    assert!(sig.samples()[0].pen_up);
    assert_eq!(sig.samples()[0].pressure, 0.0);
}

#[test]
fn malformed_inputs_name_the_line() {
    let err = parse_svc2004("0\n").unwrap_err();
    assert!(err.to_string().contains("declared zero points"), "{err}");

    let cases = [
        ("2\n1 2 3 1 5 6 7\n", 2, "mismatch"),
        ("1\n1 2 3 1 5 6 7\n8 9 10 1 1 1 1\n", 3, "mismatch"),
        ("1\n1 2 x 1 5 6 7\n", 2, "malformed"),
        ("1\n1 2 3 1 5 6\n", 2, "columns"),
        ("2\n1 2 30 1 5 6 7\n1 2 20 1 5 6 7\n", 3, "timestamp"),
        ("1\n1 2 3 1 5 6 -4\n", 2, "pressure"),
    ];
    for (text, line, needle) in cases {
        match parse_svc2004(text) {
            Err(Error::Parse { line: l, message }) => {
                assert_eq!(l, line, "{text:?}: {message}");
                assert!(message.contains(needle), "{text:?}: {message}");
            }
            other => panic!("{text:?} parsed as {other:?}"),
        }
    }
}

#[test]
fn button_status_wins_over_pressure() {
    let sig = parse_svc2004("2\n0 0 0 0 0 0 55\n1 1 10 1 0 0 0\n").unwrap();
    assert!(sig.samples()[0].pen_up);
    assert!(!sig.samples()[1].pen_up);
}

fn arb_signature() -> impl Strategy<Value = RawSignature> {
    prop::collection::vec(
        (
            -5000i32..5000,
            -5000i32..5000,
            1u32..30,
            any::<bool>(),
            0u32..3600,
            0u32..900,
            0u32..1024,
        ),
        1..60,
    )
    .prop_map(|rows| {
        let mut t = 1_000_000.0;
        let samples = rows
            .into_iter()
            .map(|(x, y, dt, up, az, alt, p)| {
                t += dt as f64;
                RawSample {
                    x: x as f64,
                    y: y as f64,
                    t,
                    pen_up: up,
                    azimuth: az as f64,
                    altitude: alt as f64,
                    pressure: if up { 0.0 } else { p as f64 },
                }
            })
            .collect();
        RawSignature::new(samples, "", Genuineness::Unknown).unwrap()
    })
}

proptest! {
    #[test]
    fn serialize_then_parse_round_trips(sig in arb_signature()) {
        let back = parse_svc2004(&serialize_svc2004(&sig)).unwrap();
        prop_assert_eq!(back, sig);
    }
}

fn spec(components: Vec<SyntheticComponent>, n: usize, seed: u64) -> SyntheticSpec {
    SyntheticSpec { components, sample_count: n, seed }
}

fn comp(weight: f64, mean: Vec<f64>, cov: Vec<Vec<f64>>) -> SyntheticComponent {
    SyntheticComponent { weight, mean, cov }
}

#[test]
fn standard_normal_sample_mean_is_near_zero() {
    let s = spec(vec![comp(1.0, vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]])], 10_000, 5);
    let (data, labels) = generate_mixture_samples(&s).unwrap();
    assert!(labels.iter().all(|&l| l == 0));
    for m in data.mean() {
        assert!(m.abs() < 0.05, "{m}");
    }
}

#[test]
fn label_frequencies_follow_weights() {
    let weights = [0.2, 0.5, 0.3];
    for seed in [0, 1, 2] {
        let s = spec(
            weights.iter().enumerate().map(|(j, &w)| comp(w, vec![j as f64], vec![vec![1.0]])).collect(),
            100_000,
            seed,
        );
        let (_, labels) = generate_mixture_samples(&s).unwrap();
        for (j, w) in weights.iter().enumerate() {
            let freq = labels.iter().filter(|&&l| l == j).count() as f64 / labels.len() as f64;
            assert!((freq - w).abs() < 0.01, "seed {seed} component {j}: {freq}");
        }
    }
}

#[test]
fn generation_is_deterministic_per_seed() {
    let s = spec(
        vec![
            comp(0.4, vec![0.0, 1.0], vec![vec![1.0, 0.3], vec![0.3, 2.0]]),
            comp(0.6, vec![5.0, 1.0], vec![vec![0.5, 0.0], vec![0.0, 0.5]]),
        ],
        500,
        77,
    );
    assert_eq!(generate_mixture_samples(&s).unwrap(), generate_mixture_samples(&s).unwrap());
    let other = SyntheticSpec { seed: 78, ..s.clone() };
    assert_ne!(generate_mixture_samples(&s).unwrap().0, generate_mixture_samples(&other).unwrap().0);
}

#[test]
fn invalid_specs_are_rejected() {
    let not_pd = spec(vec![comp(1.0, vec![0.0, 0.0], vec![vec![1.0, 2.0], vec![2.0, 1.0]])], 10, 0);
    assert!(generate_mixture_samples(&not_pd).is_err());
    let bad_weights = spec(vec![comp(0.5, vec![0.0], vec![vec![1.0]]), comp(0.4, vec![1.0], vec![vec![1.0]])], 10, 0);
    assert!(generate_mixture_samples(&bad_weights).is_err());
}
