use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sigmix::byy::{recovery_experiment, AnnealConfig};
use sigmix::features::build_feature_sequence;
use sigmix::persist::{load_model, save_model};
use sigmix::protocol::{evaluate_corpus, load_corpus, train_all, Corpus, Method, RunConfig, TrainedModel};
use sigmix::signal_io::{load_signature_file, SyntheticSpec};
use sigmix::verify::scores_to_csv;
use sigmix::extract_features;

use crate::config::{pick_dir, Overrides};
use crate::CliError;

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::user(format!("cannot write {}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::user(format!("cannot create {}: {e}", dir.display())))
}

fn load(cfg: &RunConfig, data: Option<PathBuf>) -> Result<Corpus, CliError> {
    let dir = pick_dir(data, &cfg.data_root, "dataset directory (--data)")?;
    if !dir.is_dir() {
        return Err(CliError::user(format!("dataset directory {} does not exist", dir.display())));
    }
    let corpus = load_corpus(&dir, cfg.split.genuine_per_user)?;
    log::info!("loaded {} signatures of {} users", corpus.signature_count(), corpus.users.len());
    Ok(corpus)
}

pub fn train(
    cfg: &RunConfig,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
    users: &[String],
    em_k: Option<usize>,
    trace_csv: bool,
) -> Result<(), CliError> {
    cfg.validate()?;
    let out = pick_dir(out, &cfg.output_dir, "output directory (--out)")?;
    let mut corpus = load(cfg, data)?;
    if !users.is_empty() {
        if let Some(missing) = users.iter().find(|u| corpus.user(u).is_none()) {
            return Err(CliError::user(format!("user {missing} is not in the dataset")));
        }
        corpus.users.retain(|u| users.contains(&u.user_id));
    }
    let trained = train_all(&corpus, cfg, em_k)?;

    // every file is written here, after all workers have finished
    ensure_dir(&out)?;
    for (model, traces) in &trained {
        let stored = model.to_stored();
        let id = stored.user_id().to_string();
        save_model(&out.join(format!("user_{id}.json")), &stored)?;
        if trace_csv {
            for (kind, trace) in [("genuine", &traces.genuine), ("forgery", &traces.forgery)] {
                if let Some(t) = trace {
                    write(&out.join(format!("user_{id}_{kind}_trace.csv")), &t.to_csv())?;
                }
            }
        }
        if let TrainedModel::Mixture { pair, .. } = model {
            println!("user {id}: genuine k={} forgery k={}", pair.genuine.k(), pair.forgery.k());
        } else {
            println!("user {id}: enrolled");
        }
    }
    println!("wrote {} models to {}", trained.len(), out.display());
    Ok(())
}

pub fn verify(cfg: &RunConfig, method: Option<Method>, model: &Path, signatures: &[PathBuf]) -> Result<(), CliError> {
    let stored = load_model(model)?;
    if let Some(m) = method {
        if m.as_str() != stored.method_name() {
            return Err(CliError::user(format!(
                "model/method mismatch: {} holds a {} model, --method {} requested",
                model.display(),
                stored.method_name(),
                m.as_str()
            )));
        }
    }
    let trained = TrainedModel::from_stored(&stored)?;
    println!("signature,score,decision");
    for path in signatures {
        let raw = load_signature_file(path, cfg.split.genuine_per_user)?;
        let (score, decision) = trained.score(&raw, cfg)?;
        println!("{},{score},{}", path.display(), decision.as_str());
    }
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, data: Option<PathBuf>, out: Option<PathBuf>) -> Result<(), CliError> {
    cfg.validate()?;
    let out = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    let corpus = load(cfg, data)?;
    let runs = evaluate_corpus(&corpus, cfg)?;
    ensure_dir(&out)?;
    for run in &runs {
        let report = out.join(format!("report_{}.csv", run.label));
        write(&report, &run.report.to_csv())?;
        write(&out.join(format!("scores_{}.csv", run.label)), &scores_to_csv(&run.scores))?;
        println!("== {} ==", run.label);
        print!("{}", run.report.to_table());
        println!("report written to {}", report.display());
    }
    Ok(())
}

/// A synthetic spec file may also carry the starting component count.
#[derive(Deserialize)]
struct SynthFile {
    #[serde(flatten)]
    spec: SyntheticSpec,
    #[serde(default)]
    k_init: Option<usize>,
}

pub fn synth(mut cfg: RunConfig, overrides: &Overrides, spec: &Path, runs: usize, tol: f64) -> Result<(), CliError> {
    let text = fs::read_to_string(spec).map_err(|e| CliError::user(format!("cannot read {}: {e}", spec.display())))?;
    let file: SynthFile =
        serde_json::from_str(&text).map_err(|e| CliError::user(format!("{}: {e}", spec.display())))?;
    if let Some(k) = file.k_init {
        cfg.anneal.k_init = k;
    }
    overrides.apply(&mut cfg);
    let anneal = AnnealConfig { seed: cfg.seed, ..cfg.anneal };
    let results = recovery_experiment(&file.spec, &anneal, runs, tol)?;
    for r in &results {
        println!(
            "run {}: data seed {}, fit seed {}, k={}, max mean error {:.4} -> {}",
            r.run,
            r.data_seed,
            r.fit_seed,
            r.k,
            r.max_mean_error,
            if r.recovered { "recovered" } else { "missed" }
        );
    }
    let hits = results.iter().filter(|r| r.recovered).count();
    println!("recovered k={} in {hits}/{runs} runs", file.spec.components.len());
    Ok(())
}

pub fn features(cfg: &RunConfig, inputs: &[PathBuf], out: Option<PathBuf>, raw: bool) -> Result<(), CliError> {
    if out.is_none() && inputs.len() > 1 {
        return Err(CliError::user("several inputs need --out"));
    }
    if let Some(dir) = &out {
        ensure_dir(dir)?;
    }
    for path in inputs {
        let sig = load_signature_file(path, cfg.split.genuine_per_user)?;
        let seq = if raw { build_feature_sequence(&sig)? } else { extract_features(&sig)? };
        match &out {
            Some(dir) => {
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                write(&dir.join(format!("{stem}.csv")), &seq.to_csv())?;
            }
            None => print!("{}", seq.to_csv()),
        }
    }
    Ok(())
}
