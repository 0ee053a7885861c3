//! JSON persistence for mixture models, user model pairs and DTW enrollments.
//!
//! A mixture is stored as
//!
//! ```json
//! {"dim": 2, "components": [{"weight": .., "mean": [..], "cov": [[..], [..]]}]}
//! ```
//!
//! Every float is written in scientific notation with 17 significant digits,
//! which round-trips `f64` exactly, so save → load → save is byte-identical.

use std::io;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::dtw::DtwEnrollment;
use crate::error::{Error, Result};
use crate::mixture::{GaussianComponent, MixtureModel};
use crate::verify::UserModelPair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRecord {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureRecord {
    pub dim: usize,
    pub components: Vec<ComponentRecord>,
}

impl From<&MixtureModel> for MixtureRecord {
    fn from(m: &MixtureModel) -> Self {
        let d = m.dim();
        Self {
            dim: d,
            components: m
                .components()
                .iter()
                .map(|c| ComponentRecord {
                    weight: c.weight,
                    mean: c.mean.iter().copied().collect(),
                    cov: (0..d).map(|a| (0..d).map(|b| c.cov[(a, b)]).collect()).collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<&MixtureRecord> for MixtureModel {
    type Error = Error;

    fn try_from(r: &MixtureRecord) -> Result<Self> {
        let d = r.dim;
        let components = r
            .components
            .iter()
            .map(|c| {
                if c.mean.len() != d || c.cov.len() != d || c.cov.iter().any(|row| row.len() != d) {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        actual: c.mean.len(),
                    });
                }
                GaussianComponent::new(
                    c.weight,
                    DVector::from_column_slice(&c.mean),
                    DMatrix::from_fn(d, d, |a, b| c.cov[a][b]),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        MixtureModel::new(components)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub user_id: String,
    pub p_f: f64,
    pub genuine: MixtureRecord,
    pub forgery: MixtureRecord,
}

impl From<&UserModelPair> for PairRecord {
    fn from(p: &UserModelPair) -> Self {
        Self {
            user_id: p.user_id.clone(),
            p_f: p.p_f,
            genuine: (&p.genuine).into(),
            forgery: (&p.forgery).into(),
        }
    }
}

impl TryFrom<&PairRecord> for UserModelPair {
    type Error = Error;

    fn try_from(r: &PairRecord) -> Result<Self> {
        UserModelPair::new(
            r.user_id.clone(),
            (&r.genuine).try_into()?,
            (&r.forgery).try_into()?,
            r.p_f,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtwRecord {
    pub user_id: String,
    pub enrollment: DtwEnrollment,
}

/// Everything `train` writes for one user, tagged by the method that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum StoredModel {
    Byy(PairRecord),
    Em(PairRecord),
    Dtw(DtwRecord),
}

impl StoredModel {
    pub fn method_name(&self) -> &'static str {
        match self {
            StoredModel::Byy(_) => "byy",
            StoredModel::Em(_) => "em",
            StoredModel::Dtw(_) => "dtw",
        }
    }

    pub fn user_id(&self) -> &str {
        match self {
            StoredModel::Byy(p) | StoredModel::Em(p) => &p.user_id,
            StoredModel::Dtw(d) => &d.user_id,
        }
    }
}

/// Pretty printing with 17-significant-digit floats.
struct PreciseFormatter<'a>(PrettyFormatter<'a>);

impl Formatter for PreciseFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if !value.is_finite() {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "non-finite float"));
        }
        write!(w, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes any value with the precise float format.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, PreciseFormatter(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn mixture_to_json(model: &MixtureModel) -> Result<String> {
    to_json(&MixtureRecord::from(model))
}

pub fn mixture_from_json(text: &str) -> Result<MixtureModel> {
    let rec: MixtureRecord = serde_json::from_str(text)?;
    (&rec).try_into()
}

pub fn save_model(path: &Path, model: &StoredModel) -> Result<()> {
    std::fs::write(path, to_json(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<StoredModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let model: StoredModel = serde_json::from_str(&text)?;
    // validate the mixtures eagerly
    if let StoredModel::Byy(p) | StoredModel::Em(p) = &model {
        UserModelPair::try_from(p)?;
    }
    Ok(model)
}
