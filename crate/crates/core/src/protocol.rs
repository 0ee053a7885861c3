//! Corpus loading and the per-user train/test protocol.
//!
//! A corpus is a directory of `UxxSyy.TXT` files. For every user the first
//! `train_genuine` genuine signatures train the genuine model and the first
//! `train_forgery` forgeries train the forgery model; then every signature of
//! the user (or only the held-out ones) is scored and tallied.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::byy::{anneal_fit, AnnealConfig, FitTrace};
use crate::dataset::Dataset;
use crate::dtw::{dtw_enroll, dtw_verify, DtwEnrollment};
use crate::em::{em_fit, EmOptions};
use crate::error::{Error, Result};
use crate::features::extract_features;
use crate::persist::{DtwRecord, PairRecord, StoredModel};
use crate::signal_io::{load_signature_file, parse_signature_filename, Genuineness, RawSignature};
use crate::verify::{
    compare_user_ids, decide, evaluate, signature_score, Aggregation, Decision, RatesReport,
    ScoreRecord, TestOutcome, UserModelPair, DEFAULT_FORGERY_PRIOR, DEFAULT_THRESHOLD,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Byy,
    Em,
    Dtw,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Byy => "byy",
            Method::Em => "em",
            Method::Dtw => "dtw",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "byy" => Ok(Method::Byy),
            "em" => Ok(Method::Em),
            "dtw" => Ok(Method::Dtw),
            other => Err(Error::InvalidArgument(format!(
                "unknown method {other:?} (expected byy, em or dtw)"
            ))),
        }
    }
}

/// How each user's signatures are split into training and test sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Signature numbers `1..=genuine_per_user` are genuine, the rest forgeries.
    pub genuine_per_user: u32,
    pub train_genuine: usize,
    pub train_forgery: usize,
    /// Score only signatures not used for training.
    pub held_out_only: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            genuine_per_user: 20,
            train_genuine: 5,
            train_forgery: 5,
            held_out_only: false,
        }
    }
}

/// Full configuration for training and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory holding the `UxxSyy.TXT` files.
    pub data_root: Option<PathBuf>,
    /// Where models, traces and reports are written.
    pub output_dir: Option<PathBuf>,
    pub method: Method,
    pub anneal: AnnealConfig,
    /// Component counts swept by the EM baseline.
    pub em_ks: Vec<usize>,
    pub em_tol: f64,
    pub em_max_iters: usize,
    pub split: SplitConfig,
    pub threshold: f64,
    pub p_f: f64,
    pub aggregation: Aggregation,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_root: None,
            output_dir: None,
            method: Method::Byy,
            anneal: AnnealConfig::default(),
            em_ks: vec![8, 16, 24, 32],
            em_tol: 1e-6,
            em_max_iters: 200,
            split: SplitConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            p_f: DEFAULT_FORGERY_PRIOR,
            aggregation: Aggregation::Average,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) {
            return Err(Error::InvalidArgument("threshold must be positive".into()));
        }
        if !(self.p_f > 0.0 && self.p_f < 1.0) {
            return Err(Error::InvalidArgument("p_f must lie in (0, 1)".into()));
        }
        if self.method == Method::Em && self.em_ks.is_empty() {
            return Err(Error::InvalidArgument("em needs at least one k".into()));
        }
        if self.split.train_genuine == 0 || (self.method != Method::Dtw && self.split.train_forgery == 0) {
            return Err(Error::InvalidArgument("training split must be non-empty".into()));
        }
        if self.method == Method::Dtw && self.split.train_genuine < 2 {
            return Err(Error::InvalidArgument("dtw enrollment needs at least 2 genuine signatures".into()));
        }
        if self.method == Method::Byy {
            self.anneal_config().validate()?;
        }
        Ok(())
    }

    fn anneal_config(&self) -> AnnealConfig {
        AnnealConfig {
            seed: self.seed,
            ..self.anneal.clone()
        }
    }

    fn em_options(&self) -> EmOptions {
        EmOptions {
            tol: self.em_tol,
            max_iters: self.em_max_iters,
            seed: self.seed,
            floor: self.anneal.floor,
        }
    }
}

/// A signature with its file-level identity.
#[derive(Debug, Clone)]
pub struct LabeledSignature {
    /// File stem, e.g. `U1S3`.
    pub id: String,
    pub number: u32,
    pub raw: RawSignature,
}

#[derive(Debug, Clone)]
pub struct UserSignatures {
    pub user_id: String,
    /// Sorted by signature number.
    pub signatures: Vec<LabeledSignature>,
}

impl UserSignatures {
    fn by_label(&self, label: Genuineness) -> impl Iterator<Item = &LabeledSignature> {
        self.signatures.iter().filter(move |s| s.raw.genuineness == label)
    }

    pub fn training_genuine(&self, split: &SplitConfig) -> Vec<&LabeledSignature> {
        self.by_label(Genuineness::Genuine).take(split.train_genuine).collect()
    }

    pub fn training_forgery(&self, split: &SplitConfig) -> Vec<&LabeledSignature> {
        self.by_label(Genuineness::Forgery).take(split.train_forgery).collect()
    }

    /// Signatures to score under `split`.
    pub fn test_set(&self, split: &SplitConfig) -> Vec<&LabeledSignature> {
        if !split.held_out_only {
            return self.signatures.iter().collect();
        }
        let used: Vec<u32> = self
            .training_genuine(split)
            .into_iter()
            .chain(self.training_forgery(split))
            .map(|s| s.number)
            .collect();
        self.signatures.iter().filter(|s| !used.contains(&s.number)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub users: Vec<UserSignatures>,
}

impl Corpus {
    pub fn user(&self, user_id: &str) -> Option<&UserSignatures> {
        self.users.iter().find(|u| u.user_id == user_id)
    }

    pub fn signature_count(&self) -> usize {
        self.users.iter().map(|u| u.signatures.len()).sum()
    }
}

/// Reads every `UxxSyy.TXT` under `root` (non-recursive); other files are ignored.
pub fn load_corpus(root: &Path, genuine_per_user: u32) -> Result<Corpus> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some((user, number)) = parse_signature_filename(&name) {
            files.push((user, number, entry.path()));
        }
    }
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no UxxSyy.TXT signature files in {}",
            root.display()
        )));
    }
    files.sort();
    let loaded = files
        .par_iter()
        .map(|(user, number, path)| {
            let raw = load_signature_file(path, genuine_per_user)?;
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok((*user, LabeledSignature { id, number: *number, raw }))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut users: Vec<UserSignatures> = Vec::new();
    for (user, sig) in loaded {
        let user_id = user.to_string();
        match users.last_mut() {
            Some(u) if u.user_id == user_id => u.signatures.push(sig),
            _ => users.push(UserSignatures {
                user_id,
                signatures: vec![sig],
            }),
        }
    }
    users.sort_by(|a, b| compare_user_ids(&a.user_id, &b.user_id));
    Ok(Corpus { users })
}

fn training_matrix(sigs: &[&LabeledSignature]) -> Result<Dataset> {
    let parts = sigs
        .iter()
        .map(|s| extract_features(&s.raw).map(|f| f.into_frames()))
        .collect::<Result<Vec<_>>>()?;
    Dataset::concat(parts.iter())
}

/// A trained verifier for one user.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Mixture { method: Method, pair: UserModelPair },
    Dtw { user_id: String, enrollment: DtwEnrollment },
}

impl TrainedModel {
    pub fn to_stored(&self) -> StoredModel {
        match self {
            TrainedModel::Mixture { method: Method::Em, pair } => StoredModel::Em(pair.into()),
            TrainedModel::Mixture { pair, .. } => StoredModel::Byy(pair.into()),
            TrainedModel::Dtw { user_id, enrollment } => StoredModel::Dtw(DtwRecord {
                user_id: user_id.clone(),
                enrollment: enrollment.clone(),
            }),
        }
    }

    pub fn from_stored(stored: &StoredModel) -> Result<Self> {
        Ok(match stored {
            StoredModel::Byy(p) => TrainedModel::Mixture {
                method: Method::Byy,
                pair: UserModelPair::try_from(p as &PairRecord)?,
            },
            StoredModel::Em(p) => TrainedModel::Mixture {
                method: Method::Em,
                pair: UserModelPair::try_from(p as &PairRecord)?,
            },
            StoredModel::Dtw(d) => TrainedModel::Dtw {
                user_id: d.user_id.clone(),
                enrollment: d.enrollment.clone(),
            },
        })
    }

    pub fn method(&self) -> Method {
        match self {
            TrainedModel::Mixture { method, .. } => *method,
            TrainedModel::Dtw { .. } => Method::Dtw,
        }
    }

    /// Returns the score (`ln S`, or DTW distance) and the decision.
    pub fn score(&self, raw: &RawSignature, cfg: &RunConfig) -> Result<(f64, Decision)> {
        match self {
            TrainedModel::Mixture { pair, .. } => {
                let seq = extract_features(raw)?;
                let s = signature_score(&seq, pair, cfg.aggregation)?;
                Ok((s, decide(s, cfg.threshold)))
            }
            TrainedModel::Dtw { enrollment, .. } => {
                let v = dtw_verify(raw, enrollment)?;
                Ok((v.distance, v.decision))
            }
        }
    }
}

/// Annealing traces of the genuine and forgery models.
#[derive(Debug, Clone, Default)]
pub struct TrainingTraces {
    pub genuine: Option<FitTrace>,
    pub forgery: Option<FitTrace>,
}

/// Trains one user's verifier. `em_k` selects the component count for EM.
pub fn train_user(
    user: &UserSignatures,
    cfg: &RunConfig,
    em_k: Option<usize>,
) -> Result<(TrainedModel, TrainingTraces)> {
    let genuine = user.training_genuine(&cfg.split);
    if genuine.len() < cfg.split.train_genuine {
        return Err(Error::InvalidArgument(format!(
            "user {} has {} genuine signatures, {} requested for training",
            user.user_id,
            genuine.len(),
            cfg.split.train_genuine
        )));
    }
    if cfg.method == Method::Dtw {
        let raws: Vec<RawSignature> = genuine.iter().map(|s| s.raw.clone()).collect();
        let enrollment = dtw_enroll(&raws)?;
        return Ok((
            TrainedModel::Dtw {
                user_id: user.user_id.clone(),
                enrollment,
            },
            TrainingTraces::default(),
        ));
    }
    let forgery = user.training_forgery(&cfg.split);
    if forgery.len() < cfg.split.train_forgery {
        return Err(Error::InvalidArgument(format!(
            "user {} has {} forgeries, {} requested for training",
            user.user_id,
            forgery.len(),
            cfg.split.train_forgery
        )));
    }
    let g_data = training_matrix(&genuine)?;
    let f_data = training_matrix(&forgery)?;
    let with_user = |e: Error| match e {
        Error::FitFailure(m) => Error::FitFailure(format!("user {}: {m}", user.user_id)),
        Error::InvalidArgument(m) => Error::InvalidArgument(format!("user {}: {m}", user.user_id)),
        other => other,
    };

    let (g_model, f_model, traces) = match cfg.method {
        Method::Byy => {
            let acfg = cfg.anneal_config();
            let (g, gt) = anneal_fit(&g_data, &acfg).map_err(with_user)?;
            let (f, ft) = anneal_fit(&f_data, &acfg).map_err(with_user)?;
            (
                g,
                f,
                TrainingTraces {
                    genuine: Some(gt),
                    forgery: Some(ft),
                },
            )
        }
        Method::Em => {
            let k = em_k
                .or_else(|| cfg.em_ks.first().copied())
                .ok_or_else(|| Error::InvalidArgument("no EM component count".into()))?;
            let opts = cfg.em_options();
            let (g, _) = em_fit(&g_data, k, &opts).map_err(with_user)?;
            let (f, _) = em_fit(&f_data, k, &opts).map_err(with_user)?;
            (g, f, TrainingTraces::default())
        }
        Method::Dtw => unreachable!(),
    };
    Ok((
        TrainedModel::Mixture {
            method: cfg.method,
            pair: UserModelPair::new(user.user_id.clone(), g_model, f_model, cfg.p_f)?,
        },
        traces,
    ))
}

/// Trains every user concurrently; results come back in corpus order.
pub fn train_all(
    corpus: &Corpus,
    cfg: &RunConfig,
    em_k: Option<usize>,
) -> Result<Vec<(TrainedModel, TrainingTraces)>> {
    cfg.validate()?;
    corpus
        .users
        .par_iter()
        .map(|u| train_user(u, cfg, em_k))
        .collect()
}

/// Report and per-signature scores for one method setting.
#[derive(Debug, Clone)]
pub struct EvaluationRun {
    /// `byy`, `dtw`, or `em_k<k>`.
    pub label: String,
    pub report: RatesReport,
    pub scores: Vec<ScoreRecord>,
}

fn score_user(
    user: &UserSignatures,
    model: &TrainedModel,
    cfg: &RunConfig,
) -> Result<Vec<ScoreRecord>> {
    user.test_set(&cfg.split)
        .into_iter()
        .map(|s| {
            let (score, decision) = model.score(&s.raw, cfg)?;
            Ok(ScoreRecord {
                user_id: user.user_id.clone(),
                signature_id: s.id.clone(),
                label: s.raw.genuineness,
                score,
                decision,
            })
        })
        .collect()
}

fn run_once(corpus: &Corpus, cfg: &RunConfig, em_k: Option<usize>, label: String) -> Result<EvaluationRun> {
    let scores: Vec<ScoreRecord> = corpus
        .users
        .par_iter()
        .map(|u| {
            let (model, _) = train_user(u, cfg, em_k)?;
            score_user(u, &model, cfg)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let outcomes: Vec<TestOutcome> = scores
        .iter()
        .map(|s| TestOutcome {
            user_id: s.user_id.clone(),
            decision: s.decision,
            label: s.label,
        })
        .collect();
    let users: Vec<String> = corpus.users.iter().map(|u| u.user_id.clone()).collect();
    Ok(EvaluationRun {
        label,
        report: evaluate(&outcomes, &users)?,
        scores,
    })
}

/// Runs the full protocol. EM yields one run per entry of `em_ks`.
pub fn evaluate_corpus(corpus: &Corpus, cfg: &RunConfig) -> Result<Vec<EvaluationRun>> {
    cfg.validate()?;
    match cfg.method {
        Method::Em => cfg
            .em_ks
            .iter()
            .map(|&k| run_once(corpus, cfg, Some(k), format!("em_k{k}")))
            .collect(),
        m => Ok(vec![run_once(corpus, cfg, None, m.as_str().to_string())?]),
    }
}
