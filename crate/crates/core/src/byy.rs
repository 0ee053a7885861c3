//! Annealed harmony learning of Gaussian mixtures with automatic model selection.
//!
//! The learner maximizes
//!
//! ```text
//! L_λ(Θ) = (1/N) Σ_t Σ_j p(j|u_t) ln[α_j q(u_t|m_j, Σ_j)] + λ O_N,
//! O_N    = −(1/N) Σ_t Σ_j p(j|u_t) ln p(j|u_t)
//! ```
//!
//! by alternating the tempered posterior
//! `p(j|u_t) ∝ [α_j q(u_t|m_j, Σ_j)]^(1/λ)` with closed-form weighted-moment
//! updates of `(α, m, Σ)`. The temperature λ starts at 1, where the
//! iteration is plain EM, and decays geometrically toward 0, where the
//! objective becomes the harmony functional `L(Θ)`. Harmony penalizes
//! redundant components, whose weights collapse; they are pruned after each
//! temperature stage so the surviving `k` adapts to the data.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::mixture::{log_sum_exp, CovarianceFloor, GaussianComponent, MixtureModel, PreparedMixture};
use crate::signal_io::{generate_mixture_samples, SyntheticSpec};

/// Schedule and stopping parameters for [`anneal_fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealConfig {
    /// Starting number of components; should exceed the true count.
    pub k_init: usize,
    pub lambda_init: f64,
    /// Multiplicative decay applied to λ between stages.
    pub lambda_decay: f64,
    /// Last temperature visited.
    pub lambda_min: f64,
    /// Components whose weight falls below this after a stage are removed.
    /// When unset, half the uniform starting share, `0.5 / k_init`, is used.
    ///
    /// This is effectively a minimum component mass: a component sitting on
    /// a handful of outlying points is a genuine harmony optimum and will
    /// not shrink further on its own.
    pub prune_threshold: Option<f64>,
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    /// Stage convergence tolerance on |ΔL_λ|.
    pub tol: f64,
    pub seed: u64,
    pub floor: CovarianceFloor,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            k_init: 32,
            lambda_init: 1.0,
            lambda_decay: 0.97,
            lambda_min: 0.01,
            prune_threshold: None,
            max_outer_iters: 200,
            max_inner_iters: 3,
            tol: 1e-6,
            seed: 0,
            floor: CovarianceFloor::default(),
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.k_init == 0 {
            return bad("k_init must be positive");
        }
        if !(self.lambda_min > 0.0 && self.lambda_min < self.lambda_init && self.lambda_init <= 1.0) {
            return bad("need 0 < lambda_min < lambda_init <= 1");
        }
        if !(self.lambda_decay > 0.0 && self.lambda_decay < 1.0) {
            return bad("lambda_decay must lie in (0, 1)");
        }
        let eps = self.effective_prune_threshold();
        if !(eps > 0.0 && eps < 1.0 / self.k_init as f64) {
            return bad("prune_threshold must lie in (0, 1/k_init)");
        }
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 {
            return bad("iteration limits must be positive");
        }
        if !(self.tol >= 0.0) {
            return bad("tol must be non-negative");
        }
        Ok(())
    }

    /// The pruning weight actually applied after each stage.
    pub fn effective_prune_threshold(&self) -> f64 {
        self.prune_threshold.unwrap_or(0.5 / self.k_init as f64)
    }

    /// The temperatures visited, from `lambda_init` down to `lambda_min`.
    pub fn schedule(&self) -> Vec<f64> {
        let mut out = vec![self.lambda_init];
        let mut lambda = self.lambda_init;
        while lambda > self.lambda_min && out.len() < self.max_outer_iters {
            lambda = (self.lambda_decay * lambda).max(self.lambda_min);
            out.push(lambda);
        }
        out
    }
}

/// Row-stochastic `N × k` matrix of posteriors `p(j|u_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    n: usize,
    k: usize,
    values: Vec<f64>,
}

impl Responsibilities {
    /// Validates non-negativity and unit row sums (within 1e-9).
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let k = rows.first().map_or(0, |r| r.as_ref().len());
        if k == 0 {
            return Err(Error::InvalidArgument("empty responsibilities".into()));
        }
        let mut values = Vec::with_capacity(rows.len() * k);
        for (t, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    actual: r.len(),
                });
            }
            let sum: f64 = r.iter().sum();
            if r.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "row {t} is not a probability vector"
                )));
            }
            values.extend_from_slice(r);
        }
        Ok(Self {
            n: rows.len(),
            k,
            values,
        })
    }

    pub(crate) fn from_raw(n: usize, k: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n * k);
        Self { n, k, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, t: usize, j: usize) -> f64 {
        self.values[t * self.k + j]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.k..(t + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.k)
    }
}

/// One line of the annealing log, written after each temperature stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub lambda: f64,
    /// Components surviving after this stage's pruning.
    pub k: usize,
    /// Harmony `L(Θ)` of the surviving model.
    pub harmony: f64,
    /// `L_λ(Θ)` of the surviving model at this stage's λ.
    pub annealed: f64,
    pub inner_iters: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub records: Vec<TraceRecord>,
}

impl FitTrace {
    /// CSV with columns `iteration,lambda,k,L,L_lambda`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,lambda,k,L,L_lambda\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.iteration, r.lambda, r.k, r.harmony, r.annealed
            );
        }
        out
    }
}

fn check_dims(data: &Dataset, model: &MixtureModel) -> Result<()> {
    if data.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: data.dim(),
        });
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument("no data".into()));
    }
    Ok(())
}

/// Posterior at temperature λ together with the objective pieces evaluated
/// under it. `lambda == 0` means hard (argmax) assignment.
struct Evaluation {
    resp: Responsibilities,
    /// (1/N) Σ Σ p ln(α q)
    fit: f64,
    /// O_N
    entropy: f64,
}

impl Evaluation {
    fn objective(&self, lambda: f64) -> f64 {
        if lambda == 0.0 {
            self.fit
        } else {
            self.fit + lambda * self.entropy
        }
    }
}

fn evaluate(data: &Dataset, prepared: &PreparedMixture, lambda: f64) -> Evaluation {
    let n = data.len();
    let k = prepared.k();
    let mut values = vec![0.0; n * k];
    let mut joint = vec![0.0; k];
    let mut scaled = vec![0.0; k];
    let mut scratch = vec![0.0; data.dim()];
    let mut fit = 0.0;
    let mut entropy = 0.0;

    for (u, out) in data.rows().zip(values.chunks_exact_mut(k)) {
        prepared.log_joint(u, &mut joint, &mut scratch);
        if lambda == 0.0 {
            let (best, &lj) = joint
                .iter()
                .enumerate()
                .fold((0, &f64::NEG_INFINITY), |acc, (j, v)| if *v > *acc.1 { (j, v) } else { acc });
            out[best] = 1.0;
            fit += lj;
            continue;
        }
        let inv = 1.0 / lambda;
        for (s, &l) in scaled.iter_mut().zip(&joint) {
            *s = l * inv;
        }
        let norm = log_sum_exp(&scaled);
        for j in 0..k {
            let log_p = scaled[j] - norm;
            let p = log_p.exp();
            out[j] = p;
            if p > 0.0 {
                fit += p * joint[j];
                entropy -= p * log_p;
            }
        }
    }
    let nf = n as f64;
    Evaluation {
        resp: Responsibilities::from_raw(n, k, values),
        fit: fit / nf,
        entropy: entropy / nf,
    }
}

/// Tempered posterior `p(j|u_t) ∝ [α_j q(u_t|θ_j)]^(1/λ)`, computed in the log domain.
pub fn posterior(data: &Dataset, model: &MixtureModel, lambda: f64) -> Result<Responsibilities> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    check_dims(data, model)?;
    Ok(evaluate(data, &model.prepare()?, lambda).resp)
}

/// Weighted-moment update of weights, means and covariances.
///
/// A component whose responsibility column sums to zero keeps its previous
/// mean and covariance and gets weight zero, marking it for pruning. Every
/// new covariance passes through `floor`.
pub fn update_parameters(
    data: &Dataset,
    resp: &Responsibilities,
    previous: &MixtureModel,
    floor: &CovarianceFloor,
) -> Result<MixtureModel> {
    let (n, d, k) = (data.len(), data.dim(), resp.k());
    if resp.n() != n || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "responsibilities have {} rows for {n} samples",
            resp.n()
        )));
    }
    if previous.k() != k || previous.dim() != d {
        return Err(Error::InvalidArgument(
            "previous model does not match the responsibilities".into(),
        ));
    }

    let mut mass = vec![0.0; k];
    let mut sums = vec![0.0; k * d];
    for (u, p) in data.rows().zip(resp.rows()) {
        for j in 0..k {
            mass[j] += p[j];
            let s = &mut sums[j * d..(j + 1) * d];
            for a in 0..d {
                s[a] += p[j] * u[a];
            }
        }
    }

    let mut components = Vec::with_capacity(k);
    for (j, prev) in previous.components().iter().enumerate() {
        if !(mass[j] > 0.0) {
            components.push(GaussianComponent {
                weight: 0.0,
                ..prev.clone()
            });
            continue;
        }
        let mean = DVector::from_iterator(d, sums[j * d..(j + 1) * d].iter().map(|s| s / mass[j]));
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for (u, p) in data.rows().zip(resp.rows()) {
            let w = p[j];
            if w == 0.0 {
                continue;
            }
            for a in 0..d {
                let da = u[a] - mean[a];
                for b in 0..=a {
                    cov[(a, b)] += w * da * (u[b] - mean[b]);
                }
            }
        }
        for a in 0..d {
            for b in 0..=a {
                let v = cov[(a, b)] / mass[j];
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        floor.apply(&mut cov);
        components.push(GaussianComponent {
            weight: mass[j] / n as f64,
            mean,
            cov,
        });
    }
    MixtureModel::from_components_unchecked(components)
}

/// Harmony `L(Θ) = (1/N) Σ_t Σ_j p(j|u_t) ln[α_j q(u_t|θ_j)]` with the λ = 1 posterior.
pub fn harmony(data: &Dataset, model: &MixtureModel) -> Result<f64> {
    check_dims(data, model)?;
    Ok(evaluate(data, &model.prepare()?, 1.0).fit)
}

/// `L_λ(Θ)` under the λ-tempered posterior; `λ = 0` uses hard assignment.
pub fn annealed_objective(data: &Dataset, model: &MixtureModel, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {lambda}")));
    }
    check_dims(data, model)?;
    Ok(evaluate(data, &model.prepare()?, lambda).objective(lambda))
}

/// Greedy max-min ("farthest point") seeding.
///
/// The first mean is a uniformly chosen sample; each following mean is the
/// sample farthest from all means chosen so far. Every component starts with
/// the (floored) global covariance and weight `1/k`.
pub fn initialize(data: &Dataset, k: usize, seed: u64, floor: &CovarianceFloor) -> Result<MixtureModel> {
    let n = data.len();
    if k == 0 || n <= k {
        return Err(Error::InvalidArgument(format!(
            "need more samples ({n}) than components ({k})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..n);
    let mut chosen = vec![first];
    let mut taken = vec![false; n];
    taken[first] = true;
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut nearest: Vec<f64> = data.rows().map(|u| sq(u, data.row(first))).collect();
    while chosen.len() < k {
        let mut best = None;
        let mut best_d = f64::NEG_INFINITY;
        for (t, &dist) in nearest.iter().enumerate() {
            if !taken[t] && dist > best_d {
                best_d = dist;
                best = Some(t);
            }
        }
        let next = best.expect("n > k leaves an untaken sample");
        taken[next] = true;
        chosen.push(next);
        for (t, u) in data.rows().enumerate() {
            nearest[t] = nearest[t].min(sq(u, data.row(next)));
        }
    }

    let mut cov = data.covariance();
    floor.apply(&mut cov);
    let w = 1.0 / k as f64;
    let components = chosen
        .into_iter()
        .map(|t| GaussianComponent {
            weight: w,
            mean: DVector::from_column_slice(data.row(t)),
            cov: cov.clone(),
        })
        .collect();
    MixtureModel::from_components_unchecked(components)
}

/// Result of iterating to convergence at one temperature.
#[derive(Debug, Clone)]
pub struct Stage {
    pub model: MixtureModel,
    pub iterations: usize,
    /// `L_λ` of the returned model.
    pub objective: f64,
    pub converged: bool,
}

/// Alternates posterior and parameter updates at fixed λ until
/// `|ΔL_λ| < tol` or `max_iters` updates. `on_iterate` sees every updated model.
pub fn anneal_stage<F>(
    data: &Dataset,
    model: MixtureModel,
    lambda: f64,
    tol: f64,
    max_iters: usize,
    floor: &CovarianceFloor,
    mut on_iterate: F,
) -> Result<Stage>
where
    F: FnMut(&MixtureModel),
{
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    check_dims(data, &model)?;
    let mut model = model;
    let mut eval = evaluate(data, &model.prepare()?, lambda);
    let mut prev = eval.objective(lambda);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        model = update_parameters(data, &eval.resp, &model, floor)?;
        iterations += 1;
        on_iterate(&model);
        eval = evaluate(data, &model.prepare()?, lambda);
        let obj = eval.objective(lambda);
        if !obj.is_finite() {
            return Err(Error::FitFailure(format!(
                "objective became {obj} at lambda {lambda}"
            )));
        }
        let delta = (obj - prev).abs();
        prev = obj;
        if delta < tol {
            converged = true;
            break;
        }
    }
    Ok(Stage {
        model,
        iterations,
        objective: prev,
        converged,
    })
}

/// Full annealing run with automatic model selection.
///
/// Starts from [`initialize`] with `k_init` components, runs one stage per
/// temperature of [`AnnealConfig::schedule`], and after each stage removes
/// components lighter than [`AnnealConfig::effective_prune_threshold`].
pub fn anneal_fit(data: &Dataset, cfg: &AnnealConfig) -> Result<(MixtureModel, FitTrace)> {
    cfg.validate()?;
    if data.len() <= cfg.k_init {
        return Err(Error::InvalidArgument(format!(
            "need more samples ({}) than k_init ({})",
            data.len(),
            cfg.k_init
        )));
    }
    let mut model = initialize(data, cfg.k_init, cfg.seed, &cfg.floor)?;
    let mut trace = FitTrace::default();
    for (iteration, lambda) in cfg.schedule().into_iter().enumerate() {
        let stage = anneal_stage(
            data,
            model,
            lambda,
            cfg.tol,
            cfg.max_inner_iters,
            &cfg.floor,
            |_| {},
        )?;
        model = stage.model;
        let removed = model.prune(cfg.effective_prune_threshold())?;
        let annealed = if removed > 0 {
            annealed_objective(data, &model, lambda)?
        } else {
            stage.objective
        };
        let rec = TraceRecord {
            iteration,
            lambda,
            k: model.k(),
            harmony: harmony(data, &model)?,
            annealed,
            inner_iters: stage.iterations,
        };
        log::debug!(
            "stage {iteration}: lambda={lambda:.4} k={} L={:.6} iters={}",
            rec.k,
            rec.harmony,
            rec.inner_iters
        );
        trace.records.push(rec);
    }
    Ok((model, trace))
}

/// One run of the synthetic recovery experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRun {
    pub run: usize,
    pub data_seed: u64,
    pub fit_seed: u64,
    /// Surviving component count.
    pub k: usize,
    /// Largest distance from a true mean to its nearest fitted mean.
    pub max_mean_error: f64,
    pub recovered: bool,
}

/// Fits `runs` independent samples of `spec` and checks each fit against the
/// truth. Run `i` draws data with seed `spec.seed + i` and initializes with
/// `cfg.seed + i`. A run counts as recovered when the surviving `k` equals the
/// true count and every true mean has its own fitted mean within `tol`.
pub fn recovery_experiment(
    spec: &SyntheticSpec,
    cfg: &AnnealConfig,
    runs: usize,
    tol: f64,
) -> Result<Vec<RecoveryRun>> {
    spec.validate()?;
    cfg.validate()?;
    (0..runs)
        .into_par_iter()
        .map(|i| {
            let data_seed = spec.seed.wrapping_add(i as u64);
            let fit_seed = cfg.seed.wrapping_add(i as u64);
            let (data, _) = generate_mixture_samples(&SyntheticSpec {
                seed: data_seed,
                ..spec.clone()
            })?;
            let (model, _) = anneal_fit(&data, &AnnealConfig { seed: fit_seed, ..cfg.clone() })?;
            let mut nearest = Vec::with_capacity(spec.components.len());
            let mut max_mean_error: f64 = 0.0;
            for truth in &spec.components {
                let (j, dist) = model
                    .components()
                    .iter()
                    .map(|c| {
                        c.mean
                            .iter()
                            .zip(&truth.mean)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .expect("fitted model has at least one component");
                nearest.push(j);
                max_mean_error = max_mean_error.max(dist);
            }
            let mut distinct = nearest.clone();
            distinct.sort_unstable();
            distinct.dedup();
            Ok(RecoveryRun {
                run: i,
                data_seed,
                fit_seed,
                k: model.k(),
                max_mean_error,
                recovered: model.k() == spec.components.len()
                    && distinct.len() == nearest.len()
                    && max_mean_error <= tol,
            })
        })
        .collect()
}
