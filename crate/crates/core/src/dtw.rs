//! Dynamic time warping over global signature features, with min/max template enrollment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::compute_dynamics;
use crate::signal_io::RawSignature;
use crate::verify::Decision;

/// Names of the global features, in vector order.
pub const GLOBAL_FEATURE_NAMES: [&str; 16] = [
    "duration",
    "height_width_ratio",
    "std_x",
    "std_y",
    "std_pressure",
    "std_azimuth",
    "mean_abs_vx",
    "mean_abs_vy",
    "mean_pressure",
    "mean_azimuth",
    "max_speed",
    "pen_up_fraction",
    "path_length",
    "pen_up_transitions",
    "mean_theta",
    "std_theta",
];

const RATIO_FLOOR: f64 = 1e-9;

/// Fixed-length summary of one signature; see [`GLOBAL_FEATURE_NAMES`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalFeatureVector(pub Vec<f64>);

impl GlobalFeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn global_features(raw: &RawSignature) -> Result<GlobalFeatureVector> {
    let s = raw.samples();
    let dynamics = compute_dynamics(raw)?;
    let n = s.len() as f64;

    let bounds = |f: fn(&crate::signal_io::RawSample) -> f64| {
        s.iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (x_lo, x_hi) = bounds(|p| p.x);
    let (y_lo, y_hi) = bounds(|p| p.y);

    let (_, std_x) = mean_std(s.iter().map(|p| p.x));
    let (_, std_y) = mean_std(s.iter().map(|p| p.y));
    let (mean_p, std_p) = mean_std(s.iter().map(|p| p.pressure));
    let (mean_az, std_az) = mean_std(s.iter().map(|p| p.azimuth));
    let (mean_th, std_th) = mean_std(dynamics.theta.iter().copied());

    let path_length: f64 = s
        .windows(2)
        .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
        .sum();
    let transitions = s.windows(2).filter(|w| w[1].pen_up && !w[0].pen_up).count();

    Ok(GlobalFeatureVector(vec![
        s[s.len() - 1].t - s[0].t,
        (y_hi - y_lo) / (x_hi - x_lo).max(RATIO_FLOOR),
        std_x,
        std_y,
        std_p,
        std_az,
        dynamics.vx.iter().map(|v| v.abs()).sum::<f64>() / n,
        dynamics.vy.iter().map(|v| v.abs()).sum::<f64>() / n,
        mean_p,
        mean_az,
        dynamics.v.iter().copied().fold(0.0, f64::max),
        s.iter().filter(|p| p.pen_up).count() as f64 / n,
        path_length,
        transitions as f64,
        mean_th,
        std_th,
    ]))
}

/// Unnormalized DTW cost with steps {(1,0), (0,1), (1,1)} and Euclidean local cost.
pub fn dtw_distance<T: AsRef<[f64]>>(a: &[T], b: &[T]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("DTW needs non-empty sequences".into()));
    }
    let d = a[0].as_ref().len();
    if let Some(bad) = a.iter().chain(b).map(|v| v.as_ref().len()).find(|&l| l != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: bad,
        });
    }
    let cost = |i: usize, j: usize| -> f64 {
        a[i].as_ref()
            .iter()
            .zip(b[j].as_ref())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };

    // two rolling rows over b
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![f64::INFINITY; m];
    for i in 0..a.len() {
        for j in 0..m {
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(cur[j - 1]).min(prev[j - 1]),
            };
            cur[j] = best + cost(i, j);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

/// DTW between two scalar sequences.
pub fn dtw_distance_scalar(a: &[f64], b: &[f64]) -> Result<f64> {
    let wrap = |xs: &[f64]| xs.iter().map(|&x| [x]).collect::<Vec<_>>();
    dtw_distance(&wrap(a), &wrap(b))
}

/// Per-feature minimum `v_s` (the template), maximum `v_b`, and the DTW
/// distance between them as acceptance threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtwEnrollment {
    pub v_s: Vec<f64>,
    pub v_b: Vec<f64>,
    pub threshold: f64,
}

pub fn dtw_enroll(genuine: &[RawSignature]) -> Result<DtwEnrollment> {
    if genuine.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "enrollment needs at least 2 signatures, got {}",
            genuine.len()
        )));
    }
    let feats = genuine
        .iter()
        .map(global_features)
        .collect::<Result<Vec<_>>>()?;
    let f = feats[0].0.len();
    let mut v_s = vec![f64::INFINITY; f];
    let mut v_b = vec![f64::NEG_INFINITY; f];
    for g in &feats {
        for (i, &v) in g.0.iter().enumerate() {
            v_s[i] = v_s[i].min(v);
            v_b[i] = v_b[i].max(v);
        }
    }
    let threshold = dtw_distance_scalar(&v_s, &v_b)?;
    Ok(DtwEnrollment { v_s, v_b, threshold })
}

/// Outcome of a template comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtwVerdict {
    pub decision: Decision,
    pub distance: f64,
}

/// Accepts when the DTW distance from the signature's features to `v_s` is at most the threshold.
pub fn dtw_verify(sig: &RawSignature, enr: &DtwEnrollment) -> Result<DtwVerdict> {
    dtw_verify_features(&global_features(sig)?, enr)
}

pub fn dtw_verify_features(features: &GlobalFeatureVector, enr: &DtwEnrollment) -> Result<DtwVerdict> {
    let distance = dtw_distance_scalar(features.as_slice(), &enr.v_s)?;
    let decision = if distance <= enr.threshold {
        Decision::Accept
    } else {
        Decision::Reject
    };
    Ok(DtwVerdict { decision, distance })
}
