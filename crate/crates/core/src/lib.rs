//! Gaussian mixture learning with annealed harmony maximization and
//! automatic model selection, applied to on-line signature verification.
//!
//! The pipeline is:
//!
//! 1. [`signal_io`] reads pen-tablet recordings (SVC2004 Task-2 layout).
//! 2. [`features`] turns each recording into z-scored `[x, y, p, v, θ]` frames.
//! 3. [`byy`] fits a genuine and a forgery mixture per user, pruning
//!    redundant components while annealing; [`em`] is the fixed-`k` baseline.
//! 4. [`verify`] scores a signature by the log likelihood ratio of the two
//!    models and tallies FAR/FRR.
//!
//! [`dtw`] provides the template-matching baseline and [`protocol`] ties
//! everything into a corpus-level train/test run.

pub mod byy;
pub mod dataset;
pub mod dtw;
pub mod em;
pub mod error;
pub mod features;
pub mod mixture;
pub mod persist;
pub mod protocol;
pub mod signal_io;
pub mod verify;

pub use byy::{anneal_fit, AnnealConfig, FitTrace, Responsibilities};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use features::{extract_features, FeatureSequence};
pub use mixture::{GaussianComponent, MixtureModel};
pub use signal_io::{Genuineness, RawSample, RawSignature};
pub use verify::{Decision, RatesReport, UserModelPair};
