//! `sigmix`: train, verify and evaluate mixture-model signature verifiers.
//!
//! Exit status is 0 on success, 1 for bad input or usage, 2 when the numerics
//! fail (a covariance that cannot be repaired, a fit that degenerates).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Overrides;

#[derive(Debug, Parser)]
#[command(name = "sigmix", version, about = "Gaussian-mixture on-line signature verification")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the defaults table and exit.
    #[arg(long)]
    show_defaults: bool,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit per-user models and write one JSON file per user.
    Train {
        /// Directory of UxxSyy.TXT files.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output directory for user_<id>.json files.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Train only these users (repeatable).
        #[arg(long = "user")]
        users: Vec<String>,
        /// Component count when --method em (defaults to the first of em_ks).
        #[arg(long)]
        k: Option<usize>,
        /// Also write annealing traces as user_<id>_{genuine,forgery}_trace.csv.
        #[arg(long)]
        trace_csv: bool,
    },
    /// Score signature files against a stored user model.
    Verify {
        /// A model file written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Signature files in SVC2004 format.
        #[arg(required = true)]
        signatures: Vec<PathBuf>,
    },
    /// Train and test every user, then write the FAR/FRR report.
    Evaluate {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output directory for report_<method>.csv and scores_<method>.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeated model-selection runs on samples from a known mixture.
    Synth {
        /// JSON file: components, sample_count, seed, and optionally k_init.
        #[arg(long)]
        spec: PathBuf,
        /// Number of runs; run i uses data seed spec.seed+i and fit seed seed+i.
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        /// Largest allowed distance between a true and a fitted mean.
        #[arg(long, default_value_t = 0.2)]
        tol: f64,
    },
    /// Dump per-frame features of signature files as CSV.
    Features {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Write <stem>.csv files here instead of printing (required for several inputs).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip z-score normalization.
        #[arg(long)]
        raw: bool,
    },
}

/// An error already classified for the exit status.
#[derive(Debug)]
pub struct CliError {
    message: String,
    numeric: bool,
}

impl CliError {
    pub fn user(message: impl Into<String>) -> Self {
        Self { message: message.into(), numeric: false }
    }
}

impl From<sigmix::Error> for CliError {
    fn from(e: sigmix::Error) -> Self {
        Self { numeric: e.is_numeric(), message: e.to_string() }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.show_defaults {
        print!("{}", config::defaults_table());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(CliError::user("no subcommand given (try --help)"));
    };
    let mut cfg = config::load_config(cli.config.as_deref())?;
    match command {
        Command::Train { data, out, users, k, trace_csv } => {
            cli.overrides.apply(&mut cfg);
            commands::train(&cfg, data, out, &users, k, trace_csv)
        }
        Command::Verify { model, signatures } => {
            let method_flag = cli.overrides.method;
            cli.overrides.apply(&mut cfg);
            commands::verify(&cfg, method_flag, &model, &signatures)
        }
        Command::Evaluate { data, out } => {
            cli.overrides.apply(&mut cfg);
            commands::evaluate(&cfg, data, out)
        }
        Command::Synth { spec, seeds, tol } => commands::synth(cfg, &cli.overrides, &spec, seeds, tol),
        Command::Features { inputs, out, raw } => {
            cli.overrides.apply(&mut cfg);
            commands::features(&cfg, &inputs, out, raw)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(if e.numeric { 2 } else { 1 })
        }
    }
}
