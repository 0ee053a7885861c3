//! Gaussian mixture representation and log-domain density evaluation.
//!
//! Every density is evaluated through a Cholesky factor of the covariance;
//! no explicit inverse is ever formed. Linear-domain densities are never
//! materialized outside of tests.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// ln(2π)
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

const SYMMETRY_TOL: f64 = 1e-9;
const WEIGHT_SUM_TOL: f64 = 1e-9;

/// One weighted Gaussian: weight α, mean m and full covariance Σ.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let c = Self { weight, mean, cov };
        c.validate()?;
        Ok(c)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn validate(&self) -> Result<()> {
        let d = self.mean.len();
        if !(self.weight >= 0.0 && self.weight.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "weight {} is not a probability",
                self.weight
            )));
        }
        if self.cov.nrows() != d || self.cov.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: self.cov.nrows(),
            });
        }
        for a in 0..d {
            for b in 0..a {
                if (self.cov[(a, b)] - self.cov[(b, a)]).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidModel("covariance is not symmetric".into()));
                }
            }
        }
        if self.mean.iter().chain(self.cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite parameter".into()));
        }
        Ok(())
    }

    /// `ln N(u | m, Σ)`.
    pub fn log_density(&self, u: &[f64]) -> Result<f64> {
        component_log_density(u, self)
    }
}

/// `ln N(u | m, Σ)` for a single component, via a fresh Cholesky factor.
pub fn component_log_density(u: &[f64], comp: &GaussianComponent) -> Result<f64> {
    if u.len() != comp.dim() {
        return Err(Error::DimensionMismatch {
            expected: comp.dim(),
            actual: u.len(),
        });
    }
    let f = CholeskyGaussian::new(comp, 0)?;
    let mut scratch = vec![0.0; u.len()];
    Ok(f.log_density(u, &mut scratch))
}

/// A mixture of `k ≥ 1` Gaussians sharing dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    dim: usize,
    components: Vec<GaussianComponent>,
}

impl MixtureModel {
    /// Validates shapes, symmetry and that the weights sum to one.
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        let m = Self::from_components_unchecked(components)?;
        let sum: f64 = m.components.iter().map(|c| c.weight).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidModel(format!("weights sum to {sum}, not 1")));
        }
        Ok(m)
    }

    /// Shape checks only; the weights may be unnormalized.
    pub(crate) fn from_components_unchecked(components: Vec<GaussianComponent>) -> Result<Self> {
        let dim = components
            .first()
            .map(GaussianComponent::dim)
            .ok_or_else(|| Error::InvalidModel("mixture needs at least one component".into()))?;
        if dim == 0 {
            return Err(Error::InvalidModel("dimension must be positive".into()));
        }
        for c in &components {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: c.dim(),
                });
            }
            c.validate()?;
        }
        Ok(Self { dim, components })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    /// Drops components with weight below `threshold` and rescales the rest to sum to one.
    /// Returns the number removed.
    pub fn prune(&mut self, threshold: f64) -> Result<usize> {
        let before = self.components.len();
        self.components.retain(|c| c.weight >= threshold && c.weight > 0.0);
        if self.components.is_empty() {
            return Err(Error::FitFailure("every component was pruned".into()));
        }
        self.renormalize();
        Ok(before - self.components.len())
    }

    pub(crate) fn renormalize(&mut self) {
        let sum: f64 = self.components.iter().map(|c| c.weight).sum();
        for c in &mut self.components {
            c.weight /= sum;
        }
    }

    /// Factorizes every covariance once so that many points can be evaluated cheaply.
    pub fn prepare(&self) -> Result<PreparedMixture> {
        let comps = self
            .components
            .iter()
            .enumerate()
            .map(|(j, c)| CholeskyGaussian::new(c, j))
            .collect::<Result<Vec<_>>>()?;
        let log_weights = self
            .components
            .iter()
            .map(|c| if c.weight > 0.0 { c.weight.ln() } else { f64::NEG_INFINITY })
            .collect();
        Ok(PreparedMixture {
            dim: self.dim,
            comps,
            log_weights,
        })
    }
}

/// A Gaussian with its covariance factorized as `Σ = L Lᵀ`.
#[derive(Debug, Clone)]
pub(crate) struct CholeskyGaussian {
    mean: Vec<f64>,
    /// Row-major lower triangle of L (full d×d storage).
    chol: Vec<f64>,
    /// −(d/2) ln 2π − (1/2) ln|Σ|
    log_norm: f64,
}

impl CholeskyGaussian {
    fn new(comp: &GaussianComponent, index: usize) -> Result<Self> {
        let d = comp.dim();
        let chol = nalgebra::Cholesky::new(comp.cov.clone())
            .ok_or(Error::NotPositiveDefinite { component: index })?;
        let l = chol.l();
        let mut flat = vec![0.0; d * d];
        let mut log_det = 0.0;
        for a in 0..d {
            for b in 0..=a {
                flat[a * d + b] = l[(a, b)];
            }
            let diag = l[(a, a)];
            if !(diag > 0.0 && diag.is_finite()) {
                return Err(Error::NotPositiveDefinite { component: index });
            }
            log_det += 2.0 * diag.ln();
        }
        Ok(Self {
            mean: comp.mean.iter().copied().collect(),
            chol: flat,
            log_norm: -0.5 * (d as f64) * LN_2PI - 0.5 * log_det,
        })
    }

    /// Forward substitution `L z = u − m`, then `log_norm − |z|²/2`.
    #[inline]
    fn log_density(&self, u: &[f64], z: &mut [f64]) -> f64 {
        let d = self.mean.len();
        let mut maha = 0.0;
        for a in 0..d {
            let row = &self.chol[a * d..a * d + a + 1];
            let mut s = u[a] - self.mean[a];
            for b in 0..a {
                s -= row[b] * z[b];
            }
            let za = s / row[a];
            z[a] = za;
            maha += za * za;
        }
        self.log_norm - 0.5 * maha
    }
}

/// A mixture with every component factorized; the evaluation workhorse.
#[derive(Debug, Clone)]
pub struct PreparedMixture {
    dim: usize,
    comps: Vec<CholeskyGaussian>,
    log_weights: Vec<f64>,
}

impl PreparedMixture {
    pub fn k(&self) -> usize {
        self.comps.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes `ln α_j + ln q(u | θ_j)` for every component into `out`.
    /// Zero-weight components yield −∞.
    pub fn log_joint(&self, u: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        for ((o, c), lw) in out.iter_mut().zip(&self.comps).zip(&self.log_weights) {
            *o = if lw.is_finite() {
                lw + c.log_density(u, scratch)
            } else {
                f64::NEG_INFINITY
            };
        }
    }

    /// `ln q(u | θ_j)` for every component, ignoring the weights.
    pub fn component_log_densities(&self, u: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.comps) {
            *o = c.log_density(u, scratch);
        }
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn log_density(&self, u: &[f64]) -> f64 {
        let mut joint = vec![0.0; self.k()];
        let mut scratch = vec![0.0; self.dim];
        self.log_joint(u, &mut joint, &mut scratch);
        log_sum_exp(&joint)
    }
}

/// `ln Σ exp(x_i)` with the max-shift; −∞ entries are skipped.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = xs
        .iter()
        .filter(|x| x.is_finite())
        .map(|&x| (x - max).exp())
        .sum();
    max + s.ln()
}

/// `ln p(u | Θ) = ln Σ_j α_j q(u | θ_j)`.
pub fn mixture_log_density(u: &[f64], model: &MixtureModel) -> Result<f64> {
    if u.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: u.len(),
        });
    }
    if model.components.iter().all(|c| c.weight <= 0.0) {
        return Err(Error::InvalidModel("all weights are zero".into()));
    }
    Ok(model.prepare()?.log_density(u))
}

/// Per-frame average of `mixture_log_density` over a sequence.
pub fn sequence_avg_log_density(frames: &Dataset, model: &MixtureModel) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    Ok(sequence_log_density_sum(frames, model)? / frames.len() as f64)
}

/// Sum of `mixture_log_density` over a sequence (the unnormalized log-likelihood).
pub fn sequence_log_density_sum(frames: &Dataset, model: &MixtureModel) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    if frames.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: frames.dim(),
        });
    }
    if model.components.iter().all(|c| c.weight <= 0.0) {
        return Err(Error::InvalidModel("all weights are zero".into()));
    }
    let prepared = model.prepare()?;
    let mut joint = vec![0.0; prepared.k()];
    let mut scratch = vec![0.0; prepared.dim()];
    Ok(frames
        .rows()
        .map(|u| {
            prepared.log_joint(u, &mut joint, &mut scratch);
            log_sum_exp(&joint)
        })
        .sum())
}

/// Diagonal loading that keeps covariances comfortably positive definite.
///
/// When the smallest eigenvalue falls below `relative · s`, with
/// `s = max(trace/d, absolute)`, the diagonal is raised by `bump · s`
/// (plus any negative excess from rounding).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovarianceFloor {
    pub relative: f64,
    pub bump: f64,
    pub absolute: f64,
}

impl Default for CovarianceFloor {
    fn default() -> Self {
        Self {
            relative: 1e-6,
            bump: 1e-5,
            absolute: 1e-6,
        }
    }
}

impl CovarianceFloor {
    /// Symmetrizes `cov` and floors it in place. Returns whether loading was applied.
    pub fn apply(&self, cov: &mut DMatrix<f64>) -> bool {
        let d = cov.nrows();
        for a in 0..d {
            for b in 0..a {
                let v = 0.5 * (cov[(a, b)] + cov[(b, a)]);
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        let scale = (cov.trace() / d as f64).max(self.absolute);
        let min_eig = SymmetricEigen::new(cov.clone()).eigenvalues.min();
        if min_eig.is_nan() || min_eig < self.relative * scale {
            let load = self.bump * scale + (-min_eig).max(0.0);
            for a in 0..d {
                cov[(a, a)] += load;
            }
            true
        } else {
            false
        }
    }
}
