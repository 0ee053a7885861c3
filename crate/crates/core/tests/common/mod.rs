//! Independent reference implementations used as test oracles.
//!
//! Everything here is written the slow, obvious way (cofactor expansion,
//! linear-domain sums, explicit double loops) so that it shares no code path
//! with the library. The drivers at the bottom run library code on
//! generated inputs and are shared by several test targets.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigmix::byy::{annealed_objective, anneal_stage, initialize, posterior, update_parameters};
use sigmix::em::{em_fit_from, EmOptions};
use sigmix::mixture::CovarianceFloor;
use sigmix::{Dataset, GaussianComponent, MixtureModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Determinant by Laplace expansion along the first row.
pub fn cofactor_det(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    if n == 1 {
        return m[0][0];
    }
    (0..n)
        .map(|c| {
            let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
            sign * m[0][c] * cofactor_det(&minor(m, 0, c))
        })
        .sum()
}

fn minor(m: &[Vec<f64>], row: usize, col: usize) -> Vec<Vec<f64>> {
    m.iter()
        .enumerate()
        .filter(|&(r, _)| r != row)
        .map(|(_, line)| {
            line.iter()
                .enumerate()
                .filter(|&(c, _)| c != col)
                .map(|(_, &v)| v)
                .collect()
        })
        .collect()
}

/// Inverse via the adjugate.
pub fn cofactor_inverse(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let det = cofactor_det(m);
    if n == 1 {
        return vec![vec![1.0 / det]];
    }
    let mut inv = vec![vec![0.0; n]; n];
    for r in 0..n {
        for c in 0..n {
            let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
            // transpose of the cofactor matrix
            inv[c][r] = sign * cofactor_det(&minor(m, r, c)) / det;
        }
    }
    inv
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
}

/// Gaussian density in the linear domain.
pub fn gaussian_pdf(u: &[f64], mean: &[f64], cov: &[Vec<f64>]) -> f64 {
    let d = u.len();
    let inv = cofactor_inverse(cov);
    let diff: Vec<f64> = u.iter().zip(mean).map(|(a, b)| a - b).collect();
    let mut q = 0.0;
    for a in 0..d {
        for b in 0..d {
            q += diff[a] * inv[a][b] * diff[b];
        }
    }
    let norm = (2.0 * std::f64::consts::PI).powi(d as i32) * cofactor_det(cov);
    (-0.5 * q).exp() / norm.sqrt()
}

pub fn component_pdf(u: &[f64], c: &GaussianComponent) -> f64 {
    gaussian_pdf(u, c.mean.as_slice(), &to_rows(&c.cov))
}

/// Σ α_j q_j(u) summed directly.
pub fn mixture_pdf(u: &[f64], m: &MixtureModel) -> f64 {
    m.components().iter().map(|c| c.weight * component_pdf(u, c)).sum()
}

/// Posterior rows `(α q)^(1/λ) / Σ (α q)^(1/λ)`, each row rescaled by its
/// largest joint term before exponentiation. `λ = 0` gives the one-hot argmax
/// (lowest index on ties).
pub fn posterior_oracle(data: &Dataset, m: &MixtureModel, lambda: f64) -> Vec<Vec<f64>> {
    data.rows()
        .map(|u| {
            let joint: Vec<f64> = m
                .components()
                .iter()
                .map(|c| c.weight * component_pdf(u, c))
                .collect();
            let top = joint.iter().copied().fold(0.0, f64::max);
            if lambda == 0.0 {
                let best = joint.iter().position(|&v| v == top).unwrap();
                return (0..joint.len()).map(|j| if j == best { 1.0 } else { 0.0 }).collect();
            }
            let powered: Vec<f64> = joint.iter().map(|v| (v / top).powf(1.0 / lambda)).collect();
            let total: f64 = powered.iter().sum();
            powered.iter().map(|v| v / total).collect()
        })
        .collect()
}

/// `(1/N) Σ_t Σ_j p ln(α q)` and `O_N = −(1/N) Σ_t Σ_j p ln p` by direct double sums.
pub fn objective_parts(data: &Dataset, m: &MixtureModel, p: &[Vec<f64>]) -> (f64, f64) {
    let n = data.len() as f64;
    let mut fit = 0.0;
    let mut entropy = 0.0;
    for (t, u) in data.rows().enumerate() {
        for (j, c) in m.components().iter().enumerate() {
            let pj = p[t][j];
            if pj > 0.0 {
                fit += pj * (c.weight * component_pdf(u, c)).ln();
                entropy -= pj * pj.ln();
            }
        }
    }
    (fit / n, entropy / n)
}

pub fn harmony_oracle(data: &Dataset, m: &MixtureModel) -> f64 {
    objective_parts(data, m, &posterior_oracle(data, m, 1.0)).0
}

pub fn annealed_oracle(data: &Dataset, m: &MixtureModel, lambda: f64) -> f64 {
    let (fit, entropy) = objective_parts(data, m, &posterior_oracle(data, m, lambda));
    fit + lambda * entropy
}

/// Random symmetric positive definite matrix `A Aᵀ + shift·I`.
pub fn random_spd(r: &mut impl Rng, d: usize, shift: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| r.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * shift
}

pub fn random_model(r: &mut impl Rng, k: usize, d: usize, spread: f64) -> MixtureModel {
    let raw: Vec<f64> = (0..k).map(|_| r.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let components = raw
        .iter()
        .map(|w| {
            GaussianComponent::new(
                w / total,
                DVector::from_fn(d, |_, _| r.random_range(-spread..spread)),
                random_spd(r, d, 0.3),
            )
            .unwrap()
        })
        .collect();
    MixtureModel::new(components).unwrap()
}

pub fn random_data(r: &mut impl Rng, n: usize, d: usize, spread: f64) -> Dataset {
    let values = (0..n * d).map(|_| r.random_range(-spread..spread)).collect();
    Dataset::new(n, d, values).unwrap()
}

/// Blobs around a few random centres, so fits have something to find.
pub fn clustered_data(r: &mut impl Rng, n: usize, d: usize, centres: usize) -> Dataset {
    let cs: Vec<Vec<f64>> = (0..centres)
        .map(|_| (0..d).map(|_| r.random_range(-6.0..6.0)).collect())
        .collect();
    let mut values = Vec::with_capacity(n * d);
    for t in 0..n {
        let c = &cs[t % centres];
        for a in 0..d {
            let jitter: f64 = (0..4).map(|_| r.random_range(-1.0..1.0)).sum();
            values.push(c[a] + jitter);
        }
    }
    Dataset::new(n, d, values).unwrap()
}

/// Largest absolute difference over every weight, mean and covariance entry.
pub fn max_param_diff(a: &MixtureModel, b: &MixtureModel) -> f64 {
    assert_eq!(a.k(), b.k());
    a.components()
        .iter()
        .zip(b.components())
        .map(|(x, y)| {
            let w = (x.weight - y.weight).abs();
            let m = (&x.mean - &y.mean).abs().max();
            let c = (&x.cov - &y.cov).abs().max();
            w.max(m).max(c)
        })
        .fold(0.0, f64::max)
}

/// The ground truth used by the model-selection experiments: three 2-D
/// Gaussians whose pairwise mean distances are at least 5× the largest std.
pub fn three_gaussians(seed: u64, n: usize) -> sigmix::signal_io::SyntheticSpec {
    use sigmix::signal_io::{SyntheticComponent, SyntheticSpec};
    SyntheticSpec {
        components: vec![
            SyntheticComponent {
                weight: 0.3,
                mean: vec![0.0, 0.0],
                cov: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            },
            SyntheticComponent {
                weight: 0.3,
                mean: vec![6.0, 0.0],
                cov: vec![vec![0.5, 0.2], vec![0.2, 0.8]],
            },
            SyntheticComponent {
                weight: 0.4,
                mean: vec![3.0, 5.5],
                cov: vec![vec![0.7, -0.3], vec![-0.3, 1.0]],
            },
        ],
        sample_count: n,
        seed,
    }
}

/// Whether every true mean has a recovered mean within `tol` and the counts agree.
pub fn recovered(spec: &sigmix::signal_io::SyntheticSpec, m: &MixtureModel, tol: f64) -> bool {
    m.k() == spec.components.len()
        && spec.components.iter().all(|c| {
            m.components().iter().any(|g| {
                let d2: f64 = g.mean.iter().zip(&c.mean).map(|(a, b)| (a - b).powi(2)).sum();
                d2.sqrt() <= tol
            })
        })
}

/// Every monotone warping path cost from (0,0) to (n−1,m−1), minimised by exhaustive recursion.
pub fn brute_force_dtw(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    fn cost(x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
    }
    fn walk(a: &[Vec<f64>], b: &[Vec<f64>], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + cost(&a[i], &b[j]);
        if i == a.len() - 1 && j == b.len() - 1 {
            *best = best.min(acc);
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, acc, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &mut best);
    best
}

/// Top-down memoised recursion over the same three moves; usable on
/// sequences too long for exhaustive path enumeration.
pub fn memo_dtw(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    fn go(a: &[Vec<f64>], b: &[Vec<f64>], i: usize, j: usize, memo: &mut std::collections::HashMap<(usize, usize), f64>) -> f64 {
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let here = a[i].iter().zip(&b[j]).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        let prev = match (i, j) {
            (0, 0) => 0.0,
            (0, _) => go(a, b, 0, j - 1, memo),
            (_, 0) => go(a, b, i - 1, 0, memo),
            _ => go(a, b, i - 1, j, memo).min(go(a, b, i, j - 1, memo)).min(go(a, b, i - 1, j - 1, memo)),
        };
        memo.insert((i, j), here + prev);
        here + prev
    }
    go(a, b, a.len() - 1, b.len() - 1, &mut Default::default())
}

/// A random small problem: N ≤ 10, k ≤ 3, d ≤ 3.
pub fn small_fixture(seed: u64) -> (Dataset, MixtureModel) {
    let mut r = rng(seed);
    let n = r.random_range(1..=10);
    let k = r.random_range(1..=3);
    let d = r.random_range(1..=3);
    (random_data(&mut r, n, d, 2.5), random_model(&mut r, k, d, 2.0))
}

/// Runs both learners from the same start for `iters` updates and returns the
/// largest parameter difference seen at any step.
pub fn em_equivalence_gap(seed: u64, iters: usize) -> f64 {
    let mut r = rng(seed);
    let data = clustered_data(&mut r, 500, 2, 4);
    let floor = CovarianceFloor::default();
    let init = initialize(&data, 4, seed, &floor).unwrap();

    let mut byy_iterates = Vec::new();
    anneal_stage(&data, init.clone(), 1.0, 0.0, iters, &floor, |m| byy_iterates.push(m.clone())).unwrap();
    let mut em_iterates = Vec::new();
    let opts = EmOptions { tol: 0.0, max_iters: iters, seed, floor };
    em_fit_from(&data, init, &opts, |m| em_iterates.push(m.clone())).unwrap();

    assert_eq!(byy_iterates.len(), iters);
    assert_eq!(em_iterates.len(), iters);
    byy_iterates
        .iter()
        .zip(&em_iterates)
        .map(|(a, b)| max_param_diff(a, b))
        .fold(0.0, f64::max)
}

/// Objective before and after one posterior/update cycle on a random
/// (data, model) pair at temperature `lambda`. A random number of warm-up
/// cycles first moves some models close to a fixed point.
pub fn one_cycle(seed: u64, lambda: f64) -> (f64, f64) {
    let mut r = rng(seed);
    let n = r.random_range(20..80);
    let d = r.random_range(1..=3);
    let k = r.random_range(1..=4);
    let data = clustered_data(&mut r, n, d, 3);
    let floor = CovarianceFloor::default();
    let mut model = random_model(&mut r, k, d, 5.0);
    for _ in 0..r.random_range(0..30) {
        let p = posterior(&data, &model, lambda).unwrap();
        model = update_parameters(&data, &p, &model, &floor).unwrap();
    }
    let before = annealed_objective(&data, &model, lambda).unwrap();
    let p = posterior(&data, &model, lambda).unwrap();
    let next = update_parameters(&data, &p, &model, &floor).unwrap();
    (before, annealed_objective(&data, &next, lambda).unwrap())
}
