//! Layered configuration: built-in defaults, then an optional TOML file, then
//! command-line flags.

use std::path::{Path, PathBuf};

use clap::Args;
use sigmix::protocol::{Method, RunConfig};
use sigmix::verify::Aggregation;

use crate::CliError;

/// Flags that override individual configuration keys. Accepted before or
/// after the subcommand.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Learning method: byy, em or dtw.
    #[arg(long, global = true)]
    pub method: Option<Method>,
    /// Decision threshold T (accept when ln S >= ln T).
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Prior probability of a forgery.
    #[arg(long = "p-f", global = true)]
    pub p_f: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Starting component count for annealed learning.
    #[arg(long, global = true)]
    pub k_init: Option<usize>,
    #[arg(long, global = true)]
    pub lambda_decay: Option<f64>,
    #[arg(long, global = true)]
    pub lambda_min: Option<f64>,
    /// Minimum surviving component weight (default 0.5 / k_init).
    #[arg(long, global = true)]
    pub prune_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub max_inner_iters: Option<usize>,
    /// Comma-separated component counts for the EM baseline.
    #[arg(long, global = true, value_delimiter = ',')]
    pub em_k: Option<Vec<usize>>,
    /// Sequence log-likelihood aggregation: average or sum.
    #[arg(long, global = true, value_parser = parse_aggregation)]
    pub aggregation: Option<Aggregation>,
    #[arg(long, global = true)]
    pub train_genuine: Option<usize>,
    #[arg(long, global = true)]
    pub train_forgery: Option<usize>,
    /// Score only signatures that were not used for training.
    #[arg(long, global = true)]
    pub held_out_only: bool,
}

fn parse_aggregation(s: &str) -> Result<Aggregation, String> {
    match s {
        "average" => Ok(Aggregation::Average),
        "sum" => Ok(Aggregation::Sum),
        other => Err(format!("unknown aggregation {other:?} (expected average or sum)")),
    }
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { cfg.$($field).+ = v; })*
            };
        }
        set!(
            method => method,
            threshold => threshold,
            p_f => p_f,
            seed => seed,
            k_init => anneal.k_init,
            lambda_decay => anneal.lambda_decay,
            lambda_min => anneal.lambda_min,
            max_inner_iters => anneal.max_inner_iters,
            em_k => em_ks,
            aggregation => aggregation,
            train_genuine => split.train_genuine,
            train_forgery => split.train_forgery,
        );
        if let Some(eps) = self.prune_threshold {
            cfg.anneal.prune_threshold = Some(eps);
        }
        if self.held_out_only {
            cfg.split.held_out_only = true;
        }
    }
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::user(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::user(format!("config {}: {e}", path.display())))
}

/// The defaults table printed by `--show-defaults`; valid TOML that can be
/// edited and passed back with `--config`.
pub fn defaults_table() -> String {
    let cfg = RunConfig::default();
    let body = toml::to_string(&cfg).expect("default config serializes");
    format!(
        "# sigmix defaults (TOML; pass an edited copy with --config)\n\
         # data_root and output_dir have no default; set them here or with --data/--out.\n\
         # anneal.prune_threshold unset means 0.5 / k_init ({}).\n\n{body}",
        cfg.anneal.effective_prune_threshold()
    )
}

/// Resolves a directory from a flag, then the config, then a fallback.
pub fn pick_dir(flag: Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| CliError::user(format!("no {what} given (flag or config)")))
}
