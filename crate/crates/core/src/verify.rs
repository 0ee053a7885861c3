//! Likelihood-ratio scoring, threshold decisions and FAR/FRR accounting.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::mixture::{sequence_avg_log_density, sequence_log_density_sum, MixtureModel};
use crate::signal_io::Genuineness;

/// Acceptance threshold `T` on the (linear) score ratio.
pub const DEFAULT_THRESHOLD: f64 = 2.0;
/// Prior probability of a forgery.
pub const DEFAULT_FORGERY_PRIOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Accept => "accept",
            Decision::Reject => "reject",
        }
    }
}

/// How frame log-densities are combined into a sequence log-likelihood.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Per-frame mean, so the threshold does not depend on signature length.
    #[default]
    Average,
    /// Plain sum over frames.
    Sum,
}

/// A claimed user's genuine model, the antithetical forgery model, and the forgery prior.
#[derive(Debug, Clone, PartialEq)]
pub struct UserModelPair {
    pub user_id: String,
    pub genuine: MixtureModel,
    pub forgery: MixtureModel,
    pub p_f: f64,
}

impl UserModelPair {
    pub fn new(
        user_id: impl Into<String>,
        genuine: MixtureModel,
        forgery: MixtureModel,
        p_f: f64,
    ) -> Result<Self> {
        if !(p_f > 0.0 && p_f < 1.0) {
            return Err(Error::InvalidArgument(format!("p_f must lie in (0, 1), got {p_f}")));
        }
        if genuine.dim() != forgery.dim() {
            return Err(Error::DimensionMismatch {
                expected: genuine.dim(),
                actual: forgery.dim(),
            });
        }
        Ok(Self {
            user_id: user_id.into(),
            genuine,
            forgery,
            p_f,
        })
    }
}

/// `ln S = G(U, Θᶜ) − G(U, Θ⁻) + ln((1 − p_f)/p_f)` with `G` the aggregated log-likelihood.
pub fn signature_score(seq: &FeatureSequence, pair: &UserModelPair, agg: Aggregation) -> Result<f64> {
    if !seq.is_normalized() {
        return Err(Error::InvalidArgument("score expects a normalized sequence".into()));
    }
    let frames = seq.frames();
    let g = |m: &MixtureModel| match agg {
        Aggregation::Average => sequence_avg_log_density(frames, m),
        Aggregation::Sum => sequence_log_density_sum(frames, m),
    };
    let prior = if pair.p_f == 0.5 {
        0.0
    } else {
        ((1.0 - pair.p_f) / pair.p_f).ln()
    };
    Ok(g(&pair.genuine)? - g(&pair.forgery)? + prior)
}

/// Accept iff `log_score ≥ ln T`.
pub fn decide(log_score: f64, threshold: f64) -> Decision {
    if log_score >= threshold.ln() {
        Decision::Accept
    } else {
        Decision::Reject
    }
}

/// One tested signature.
#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    pub user_id: String,
    pub decision: Decision,
    pub label: Genuineness,
}

/// Error counts and rates for one user. Rates are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRates {
    pub user_id: String,
    pub false_accepts: usize,
    pub false_rejects: usize,
    pub total_tests: usize,
    pub genuine_tests: usize,
    pub forgery_tests: usize,
    /// `100 · FA / total`
    pub far: f64,
    /// `100 · FR / total`
    pub frr: f64,
    /// `100 − FAR − FRR`
    pub rate: f64,
    /// `100 · FA / forgeries`
    pub far_per_class: f64,
    /// `100 · FR / genuines`
    pub frr_per_class: f64,
}

impl UserRates {
    pub fn from_counts(
        user_id: impl Into<String>,
        false_accepts: usize,
        false_rejects: usize,
        genuine_tests: usize,
        forgery_tests: usize,
    ) -> Self {
        let total = genuine_tests + forgery_tests;
        let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
        let far = pct(false_accepts, total);
        let frr = pct(false_rejects, total);
        Self {
            user_id: user_id.into(),
            false_accepts,
            false_rejects,
            total_tests: total,
            genuine_tests,
            forgery_tests,
            far,
            frr,
            rate: 100.0 - far - frr,
            far_per_class: pct(false_accepts, forgery_tests),
            frr_per_class: pct(false_rejects, genuine_tests),
        }
    }
}

/// Unweighted means over users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageRates {
    pub false_accepts: f64,
    pub false_rejects: f64,
    pub total_tests: f64,
    pub far: f64,
    pub frr: f64,
    /// `100 − FAR − FRR` of the averaged rates.
    pub rate: f64,
    pub far_per_class: f64,
    pub frr_per_class: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatesReport {
    pub users: Vec<UserRates>,
    pub average: AverageRates,
}

impl RatesReport {
    pub fn from_users(users: Vec<UserRates>) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::InvalidArgument("report has no users".into()));
        }
        let n = users.len() as f64;
        let mean = |f: &dyn Fn(&UserRates) -> f64| users.iter().map(f).sum::<f64>() / n;
        let far = mean(&|u| u.far);
        let frr = mean(&|u| u.frr);
        let average = AverageRates {
            false_accepts: mean(&|u| u.false_accepts as f64),
            false_rejects: mean(&|u| u.false_rejects as f64),
            total_tests: mean(&|u| u.total_tests as f64),
            far,
            frr,
            rate: 100.0 - far - frr,
            far_per_class: mean(&|u| u.far_per_class),
            frr_per_class: mean(&|u| u.frr_per_class),
        };
        Ok(Self { users, average })
    }

    /// One row per user plus an `AVERAGE` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("user,FA,FR,total,FAR,FRR,rate,FAR_per_class,FRR_per_class\n");
        for u in &self.users {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4}",
                u.user_id,
                u.false_accepts,
                u.false_rejects,
                u.total_tests,
                u.far,
                u.frr,
                u.rate,
                u.far_per_class,
                u.frr_per_class
            );
        }
        let a = &self.average;
        let _ = writeln!(
            out,
            "AVERAGE,{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            a.false_accepts, a.false_rejects, a.total_tests, a.far, a.frr, a.rate, a.far_per_class, a.frr_per_class
        );
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<10} {:>4} {:>4} {:>6} {:>10} {:>10} {:>10}\n",
            "user", "FA", "FR", "total", "FAR(%)", "FRR(%)", "rate(%)"
        );
        for u in &self.users {
            let _ = writeln!(
                out,
                "{:<10} {:>4} {:>4} {:>6} {:>10.4} {:>10.4} {:>10.4}",
                u.user_id, u.false_accepts, u.false_rejects, u.total_tests, u.far, u.frr, u.rate
            );
        }
        let a = &self.average;
        let _ = writeln!(
            out,
            "{:<10} {:>4} {:>4} {:>6} {:>10.4} {:>10.4} {:>10.4}",
            "AVERAGE", "", "", "", a.far, a.frr, a.rate
        );
        out
    }
}

/// Orders user ids numerically when both parse as integers.
pub fn compare_user_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

/// Tallies outcomes per user.
///
/// `users` fixes the report order; a listed user without outcomes is dropped
/// with a warning. Outcomes for unlisted users are an error.
pub fn evaluate(outcomes: &[TestOutcome], users: &[String]) -> Result<RatesReport> {
    // (FA, FR, genuine, forgery)
    let mut counts: BTreeMap<&str, (usize, usize, usize, usize)> = BTreeMap::new();
    for o in outcomes {
        if !users.iter().any(|u| *u == o.user_id) {
            return Err(Error::InvalidArgument(format!(
                "outcome for unlisted user {:?}",
                o.user_id
            )));
        }
        let c = counts.entry(o.user_id.as_str()).or_default();
        match (o.label, o.decision) {
            (Genuineness::Genuine, d) => {
                c.2 += 1;
                if d == Decision::Reject {
                    c.1 += 1;
                }
            }
            (Genuineness::Forgery, d) => {
                c.3 += 1;
                if d == Decision::Accept {
                    c.0 += 1;
                }
            }
            (Genuineness::Unknown, _) => {
                return Err(Error::InvalidArgument(format!(
                    "unlabeled test signature for user {:?}",
                    o.user_id
                )))
            }
        }
    }
    let mut rows = Vec::with_capacity(users.len());
    for u in users {
        match counts.get(u.as_str()) {
            Some(&(fa, fr, g, f)) => rows.push(UserRates::from_counts(u.clone(), fa, fr, g, f)),
            None => log::warn!("user {u:?} has no test signatures; excluded from the report"),
        }
    }
    RatesReport::from_users(rows)
}

/// [`evaluate`] over every user present, in [`compare_user_ids`] order.
pub fn evaluate_all(outcomes: &[TestOutcome]) -> Result<RatesReport> {
    let mut users: Vec<String> = outcomes.iter().map(|o| o.user_id.clone()).collect();
    users.sort_by(|a, b| compare_user_ids(a, b));
    users.dedup();
    evaluate(outcomes, &users)
}

/// Per-signature score line for plotting score distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub user_id: String,
    pub signature_id: String,
    pub label: Genuineness,
    /// `ln S` for mixture methods, template distance for DTW.
    pub score: f64,
    pub decision: Decision,
}

pub fn scores_to_csv(records: &[ScoreRecord]) -> String {
    let mut out = String::from("user,signature,label,score,decision\n");
    for r in records {
        let label = match r.label {
            Genuineness::Genuine => "genuine",
            Genuineness::Forgery => "forgery",
            Genuineness::Unknown => "unknown",
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.user_id,
            r.signature_id,
            label,
            r.score,
            r.decision.as_str()
        );
    }
    out
}
