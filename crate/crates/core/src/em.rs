//! Fixed-`k` maximum-likelihood EM, the baseline without model selection.

use nalgebra::{DMatrix, DVector};

use crate::byy::{initialize, Responsibilities};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::mixture::{CovarianceFloor, GaussianComponent, MixtureModel};

/// Stopping rule and seeding for [`em_fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub floor: CovarianceFloor,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 200,
            seed: 0,
            floor: CovarianceFloor::default(),
        }
    }
}

/// Responsibilities `α_j q_j(u) / Σ_i α_i q_i(u)` and the average log-likelihood.
pub fn e_step(data: &Dataset, model: &MixtureModel) -> Result<(Responsibilities, f64)> {
    if data.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: data.dim(),
        });
    }
    let prepared = model.prepare()?;
    let log_w = prepared.log_weights();
    let k = model.k();
    let mut dens = vec![0.0; k];
    let mut scratch = vec![0.0; data.dim()];
    let mut values = Vec::with_capacity(data.len() * k);
    let mut total = 0.0;
    for u in data.rows() {
        prepared.component_log_densities(u, &mut dens, &mut scratch);
        let terms: Vec<f64> = dens.iter().zip(log_w).map(|(d, w)| d + w).collect();
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let norm = top + terms.iter().map(|v| (v - top).exp()).sum::<f64>().ln();
        total += norm;
        values.extend(terms.iter().map(|v| (v - norm).exp()));
    }
    Ok((
        Responsibilities::from_raw(data.len(), k, values),
        total / data.len() as f64,
    ))
}

/// Maximum-likelihood parameters for fixed responsibilities.
pub fn m_step(
    data: &Dataset,
    resp: &Responsibilities,
    previous: &MixtureModel,
    floor: &CovarianceFloor,
) -> Result<MixtureModel> {
    let n = data.len() as f64;
    let d = data.dim();
    let components = previous
        .components()
        .iter()
        .enumerate()
        .map(|(j, prev)| {
            let nk: f64 = (0..resp.n()).map(|t| resp.get(t, j)).sum();
            if nk <= 0.0 {
                return GaussianComponent {
                    weight: 0.0,
                    ..prev.clone()
                };
            }
            let mut mean = DVector::zeros(d);
            for (t, u) in data.rows().enumerate() {
                mean += DVector::from_column_slice(u) * resp.get(t, j);
            }
            mean /= nk;
            let mut cov = DMatrix::zeros(d, d);
            for (t, u) in data.rows().enumerate() {
                let diff = DVector::from_column_slice(u) - &mean;
                cov += &diff * diff.transpose() * resp.get(t, j);
            }
            cov /= nk;
            floor.apply(&mut cov);
            GaussianComponent {
                weight: nk / n,
                mean,
                cov,
            }
        })
        .collect();
    MixtureModel::from_components_unchecked(components)
}

/// EM from a given starting model. Returns the final model and the average
/// log-likelihood before every M-step plus the final one. `on_iterate` sees
/// each model produced by an M-step.
pub fn em_fit_from<F>(
    data: &Dataset,
    init: MixtureModel,
    opts: &EmOptions,
    mut on_iterate: F,
) -> Result<(MixtureModel, Vec<f64>)>
where
    F: FnMut(&MixtureModel),
{
    let mut model = init;
    let (mut resp, mut ll) = e_step(data, &model)?;
    let mut trace = vec![ll];
    for _ in 0..opts.max_iters {
        model = m_step(data, &resp, &model, &opts.floor)?;
        on_iterate(&model);
        let (r, next) = e_step(data, &model)?;
        if !next.is_finite() {
            return Err(Error::FitFailure(format!("log-likelihood became {next}")));
        }
        resp = r;
        trace.push(next);
        let delta = (next - ll).abs();
        ll = next;
        if delta < opts.tol {
            break;
        }
    }
    Ok((model, trace))
}

/// EM with `k` components, seeded exactly like the annealing learner.
pub fn em_fit(data: &Dataset, k: usize, opts: &EmOptions) -> Result<(MixtureModel, Vec<f64>)> {
    if k == 0 || data.len() <= k {
        return Err(Error::InvalidArgument(format!(
            "need more samples ({}) than components ({k})",
            data.len()
        )));
    }
    let init = initialize(data, k, opts.seed, &opts.floor)?;
    em_fit_from(data, init, opts, |_| {})
}
