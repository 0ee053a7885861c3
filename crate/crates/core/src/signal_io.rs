//! Pen-tablet signature ingestion and synthetic mixture data.
//!
//! The text format is the SVC2004 Task-2 layout: a first line holding the
//! point count `N`, followed by `N` lines of seven whitespace-separated
//! columns `X Y timestamp button azimuth altitude pressure`.
//!
//! Synthetic samples are drawn with `ChaCha8Rng` seeded through
//! `SeedableRng::seed_from_u64`; the component is chosen by inverse-CDF on
//! one uniform draw and the Gaussian as `m + L z` with `L` the Cholesky
//! factor of the covariance and `z` standard normal (`rand_distr`'s
//! ziggurat). Crate versions are pinned by `Cargo.lock`, so a seed always
//! reproduces the same matrix.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Whether a signature is known to come from its claimed writer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Genuineness {
    Genuine,
    Forgery,
    Unknown,
}

/// One tablet sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawSample {
    pub x: f64,
    pub y: f64,
    /// Milliseconds.
    pub t: f64,
    pub pen_up: bool,
    pub azimuth: f64,
    /// Parsed and kept, not used by any feature.
    pub altitude: f64,
    pub pressure: f64,
}

/// A complete signing act.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSignature {
    samples: Vec<RawSample>,
    pub user_id: String,
    pub genuineness: Genuineness,
}

impl RawSignature {
    /// Requires at least one sample and non-decreasing timestamps.
    pub fn new(
        samples: Vec<RawSample>,
        user_id: impl Into<String>,
        genuineness: Genuineness,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("signature has no samples".into()));
        }
        if let Some(i) = samples.windows(2).position(|w| w[1].t < w[0].t) {
            return Err(Error::InvalidArgument(format!(
                "timestamp decreases between samples {i} and {}",
                i + 1
            )));
        }
        Ok(Self {
            samples,
            user_id: user_id.into(),
            genuineness,
        })
    }

    pub fn samples(&self) -> &[RawSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Zero-based column positions for tablets whose files differ from SVC2004.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub columns: usize,
    pub x: usize,
    pub y: usize,
    pub t: usize,
    /// `None` derives pen-up from zero pressure.
    pub button: Option<usize>,
    pub azimuth: usize,
    pub altitude: usize,
    pub pressure: usize,
}

impl ColumnMap {
    pub const SVC2004: ColumnMap = ColumnMap {
        columns: 7,
        x: 0,
        y: 1,
        t: 2,
        button: Some(3),
        azimuth: 4,
        altitude: 5,
        pressure: 6,
    };
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self::SVC2004
    }
}

/// Parses one signature in the SVC2004 Task-2 layout.
pub fn parse_svc2004(text: &str) -> Result<RawSignature> {
    parse_with_columns(text, &ColumnMap::SVC2004)
}

pub fn parse_with_columns(text: &str, map: &ColumnMap) -> Result<RawSignature> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (header_line, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing point count".into(),
    })?;
    let declared: usize = header.parse().map_err(|_| Error::Parse {
        line: header_line,
        message: format!("point count {header:?} is not a non-negative integer"),
    })?;
    if declared == 0 {
        return Err(Error::Parse {
            line: header_line,
            message: "declared zero points".into(),
        });
    }

    let mut samples = Vec::with_capacity(declared);
    let mut prev_t = f64::NEG_INFINITY;
    for (line_no, line) in lines {
        if samples.len() == declared {
            return Err(Error::Parse {
                line: line_no,
                message: format!("point count mismatch: more than {declared} points"),
            });
        }
        let fields = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line: line_no,
                        message: format!("malformed value {tok:?}"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        if fields.len() != map.columns {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} columns, found {}", map.columns, fields.len()),
            });
        }
        let pressure = fields[map.pressure];
        if pressure < 0.0 {
            return Err(Error::Parse {
                line: line_no,
                message: "negative pressure".into(),
            });
        }
        let t = fields[map.t];
        if t < prev_t {
            return Err(Error::Parse {
                line: line_no,
                message: "timestamp decreases".into(),
            });
        }
        prev_t = t;
        let pen_up = match map.button {
            Some(col) => {
                let up = fields[col] == 0.0;
                if up != (pressure == 0.0) {
                    log::warn!(
                        "line {line_no}: button status and pressure disagree; using button status"
                    );
                }
                up
            }
            None => pressure == 0.0,
        };
        samples.push(RawSample {
            x: fields[map.x],
            y: fields[map.y],
            t,
            pen_up,
            azimuth: fields[map.azimuth],
            altitude: fields[map.altitude],
            pressure,
        });
    }
    if samples.len() != declared {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            message: format!(
                "point count mismatch: declared {declared}, found {}",
                samples.len()
            ),
        });
    }
    RawSignature::new(samples, "", Genuineness::Unknown)
}

/// Writes a signature back out in the SVC2004 layout.
pub fn serialize_svc2004(sig: &RawSignature) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", sig.len());
    for s in sig.samples() {
        let button = if s.pen_up { 0 } else { 1 };
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {}",
            s.x, s.y, s.t, button, s.azimuth, s.altitude, s.pressure
        );
    }
    out
}

/// Splits a `UxxSyy.TXT` file name into `(user, signature)` numbers.
pub fn parse_signature_filename(name: &str) -> Option<(u32, u32)> {
    let upper = name.to_ascii_uppercase();
    let stem = upper.strip_suffix(".TXT")?;
    let rest = stem.strip_prefix('U')?;
    let (user, sig) = rest.split_once('S')?;
    Some((user.parse().ok()?, sig.parse().ok()?))
}

/// Reads a signature file and labels it from its name: signature numbers up to
/// `genuine_count` are genuine, later ones forgeries.
pub fn load_signature_file(path: &Path, genuine_count: u32) -> Result<RawSignature> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut sig = parse_svc2004(&text).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    if let Some((user, number)) = parse_signature_filename(name) {
        sig.user_id = user.to_string();
        sig.genuineness = if number <= genuine_count {
            Genuineness::Genuine
        } else {
            Genuineness::Forgery
        };
    }
    Ok(sig)
}

/// One generating component of a synthetic mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

/// A ground-truth mixture plus the sample budget and seed for drawing from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub components: Vec<SyntheticComponent>,
    pub sample_count: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, |c| c.mean.len())
    }

    pub fn validate(&self) -> Result<()> {
        self.factors().map(|_| ())
    }

    fn factors(&self) -> Result<Vec<DMatrix<f64>>> {
        if self.components.is_empty() {
            return Err(Error::InvalidArgument("no components".into()));
        }
        if self.sample_count == 0 {
            return Err(Error::InvalidArgument("sample_count must be positive".into()));
        }
        let d = self.dim();
        if d == 0 {
            return Err(Error::InvalidArgument("zero-dimensional mean".into()));
        }
        let sum: f64 = self.components.iter().map(|c| c.weight).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("weights sum to {sum}, not 1")));
        }
        self.components
            .iter()
            .enumerate()
            .map(|(j, c)| {
                if !(c.weight > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "component {j}: weight must be positive"
                    )));
                }
                if c.mean.len() != d || c.cov.len() != d || c.cov.iter().any(|r| r.len() != d) {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        actual: c.mean.len(),
                    });
                }
                let cov = DMatrix::from_fn(d, d, |a, b| c.cov[a][b]);
                if (0..d).any(|a| (0..a).any(|b| (cov[(a, b)] - cov[(b, a)]).abs() > 1e-12)) {
                    return Err(Error::InvalidArgument(format!(
                        "component {j}: covariance is not symmetric"
                    )));
                }
                nalgebra::Cholesky::new(cov)
                    .map(|ch| ch.l())
                    .ok_or(Error::NotPositiveDefinite { component: j })
            })
            .collect()
    }
}

/// Draws `sample_count` points and the index of the component each came from.
pub fn generate_mixture_samples(spec: &SyntheticSpec) -> Result<(Dataset, Vec<usize>)> {
    let factors = spec.factors()?;
    let d = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = Vec::with_capacity(spec.sample_count * d);
    let mut labels = Vec::with_capacity(spec.sample_count);
    let last = spec.components.len() - 1;
    for _ in 0..spec.sample_count {
        let r: f64 = rng.random();
        let mut acc = 0.0;
        let mut j = last;
        for (i, c) in spec.components.iter().enumerate() {
            acc += c.weight;
            if r < acc {
                j = i;
                break;
            }
        }
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = &factors[j] * z;
        values.extend(spec.components[j].mean.iter().zip(x.iter()).map(|(m, v)| m + v));
        labels.push(j);
    }
    Ok((Dataset::new(spec.sample_count, d, values)?, labels))
}
