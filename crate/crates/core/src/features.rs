//! Per-frame feature vectors `[x, y, p, v, θ]` and their z-score normalization.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::signal_io::RawSignature;

pub const FEATURE_DIM: usize = 5;
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = ["x", "y", "p", "v", "theta"];

/// Pen-tip velocity and trajectory angle per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dynamics {
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    /// Speed `sqrt(vx² + vy²)`.
    pub v: Vec<f64>,
    /// Tangent angle in `(−π, π]`.
    pub theta: Vec<f64>,
}

/// Time derivatives by central differences (one-sided at both ends).
///
/// Where the pen is stationary the angle is undefined; the previous angle is
/// carried forward, or 0 for a leading stationary run.
pub fn compute_dynamics(raw: &RawSignature) -> Result<Dynamics> {
    let s = raw.samples();
    let n = s.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples for derivatives, got {n}"
        )));
    }
    if let Some(i) = s.windows(2).position(|w| w[1].t == w[0].t) {
        return Err(Error::ZeroTimeStep(i, i + 1));
    }

    let deriv = |f: &dyn Fn(usize) -> f64| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let (lo, hi) = match i {
                    0 => (0, 1),
                    i if i == n - 1 => (n - 2, n - 1),
                    i => (i - 1, i + 1),
                };
                (f(hi) - f(lo)) / (s[hi].t - s[lo].t)
            })
            .collect()
    };
    let vx = deriv(&|i| s[i].x);
    let vy = deriv(&|i| s[i].y);

    let mut v = Vec::with_capacity(n);
    let mut theta = Vec::with_capacity(n);
    let mut last_angle = 0.0;
    for (&dx, &dy) in vx.iter().zip(&vy) {
        let speed = dx.hypot(dy);
        if speed > 0.0 {
            let a = dy.atan2(dx);
            last_angle = if a <= -PI { PI } else { a };
        }
        v.push(speed);
        theta.push(last_angle);
    }
    Ok(Dynamics { vx, vy, v, theta })
}

/// Mean and population standard deviation of one feature column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimStats {
    pub mean: f64,
    /// Zero marks a constant column.
    pub std: f64,
}

/// An `N × 5` frame matrix, raw or normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    frames: Dataset,
    stats: Option<[DimStats; FEATURE_DIM]>,
}

impl FeatureSequence {
    /// Wraps raw (unnormalized) frames.
    pub fn raw(frames: Dataset) -> Result<Self> {
        if frames.dim() != FEATURE_DIM {
            return Err(Error::DimensionMismatch {
                expected: FEATURE_DIM,
                actual: frames.dim(),
            });
        }
        if frames.len() < 2 {
            return Err(Error::InvalidArgument(
                "feature sequences need at least 2 frames".into(),
            ));
        }
        Ok(Self {
            frames,
            stats: None,
        })
    }

    pub fn frames(&self) -> &Dataset {
        &self.frames
    }

    pub fn into_frames(self) -> Dataset {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.stats.is_some()
    }

    /// Statistics recorded at normalization time.
    pub fn per_dim_stats(&self) -> Option<&[DimStats; FEATURE_DIM]> {
        self.stats.as_ref()
    }

    /// CSV with header `x,y,p,v,theta`, one row per frame.
    pub fn to_csv(&self) -> String {
        let mut out = FEATURE_NAMES.join(",");
        out.push('\n');
        for r in self.frames.rows() {
            let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }
}

/// Assembles the unnormalized `[x, y, p, v, θ]` frames. Pen-up frames are kept.
pub fn build_feature_sequence(raw: &RawSignature) -> Result<FeatureSequence> {
    let dyn_ = compute_dynamics(raw)?;
    let n = raw.len();
    let mut values = Vec::with_capacity(n * FEATURE_DIM);
    for (i, s) in raw.samples().iter().enumerate() {
        values.extend_from_slice(&[s.x, s.y, s.pressure, dyn_.v[i], dyn_.theta[i]]);
    }
    FeatureSequence::raw(Dataset::new(n, FEATURE_DIM, values)?)
}

/// Per-signature z-scoring with the population standard deviation.
/// Constant columns map to zeros and record `std = 0`.
pub fn normalize(seq: FeatureSequence) -> Result<FeatureSequence> {
    if seq.is_normalized() {
        return Err(Error::InvalidArgument("sequence is already normalized".into()));
    }
    let mut frames = seq.frames;
    let n = frames.len() as f64;
    let mut stats = [DimStats { mean: 0.0, std: 0.0 }; FEATURE_DIM];
    for (j, st) in stats.iter_mut().enumerate() {
        let (lo, hi) = frames
            .column(j)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        let mean = frames.column(j).sum::<f64>() / n;
        let std = if lo == hi {
            0.0
        } else {
            (frames.column(j).map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
        };
        *st = DimStats { mean, std };
    }
    for row in frames.values_mut().chunks_exact_mut(FEATURE_DIM) {
        for (v, st) in row.iter_mut().zip(&stats) {
            *v = if st.std > 0.0 { (*v - st.mean) / st.std } else { 0.0 };
        }
    }
    Ok(FeatureSequence {
        frames,
        stats: Some(stats),
    })
}

/// `normalize(build_feature_sequence(raw))`.
pub fn extract_features(raw: &RawSignature) -> Result<FeatureSequence> {
    normalize(build_feature_sequence(raw)?)
}
