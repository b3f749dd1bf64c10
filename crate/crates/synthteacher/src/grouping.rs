//! Difficulty groups: linearly spaced bins over a per-sample feature.
//!
//! Two features are supported: the minimal distance from a person to any
//! other person in the image (pixels) and the camera pitch (degrees). Every
//! finite feature value maps to exactly one group; out-of-range values clamp
//! into the edge bins.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Fixed range for minimal-distance grouping, in pixels.
pub const MIN_DISTANCE_LOWER_PX: f64 = 0.0;
pub const MIN_DISTANCE_UPPER_PX: f64 = 640.0;

/// Which per-sample feature drives the grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    MinDistance,
    CameraPitch,
}

/// Binning rule mapping a feature value to a group id in `[0, num_groups)`.
///
/// Bin edges are linearly spaced: `edge_k = lower + k * width` for
/// `k = 0..=num_groups`. Immutable after construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupingSpec {
    kind: FeatureKind,
    num_groups: usize,
    lower: f64,
    upper: f64,
}

/// Result of building a pitch spec: the interval can degenerate, in which
/// case the spec falls back to `[min, max)` and reports what happened.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchSpecOutcome {
    pub spec: GroupingSpec,
    pub fallback: Option<PitchFallback>,
}

/// The variance-shrunk interval that had to be discarded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchFallback {
    pub degenerate_lower: f64,
    pub degenerate_upper: f64,
}

impl GroupingSpec {
    pub fn new(kind: FeatureKind, num_groups: usize, lower: f64, upper: f64) -> Result<Self> {
        if num_groups < 2 {
            return Err(Error::invalid(format!(
                "num_groups must be >= 2, got {num_groups}"
            )));
        }
        if !lower.is_finite() || !upper.is_finite() || lower >= upper {
            return Err(Error::invalid(format!(
                "degenerate grouping range [{lower}, {upper})"
            )));
        }
        Ok(Self {
            kind,
            num_groups,
            lower,
            upper,
        })
    }

    /// Minimal-distance grouping over `[0, 640)` px.
    pub fn min_distance(num_groups: usize) -> Result<Self> {
        Self::new(
            FeatureKind::MinDistance,
            num_groups,
            MIN_DISTANCE_LOWER_PX,
            MIN_DISTANCE_UPPER_PX,
        )
    }

    /// Camera-pitch grouping over `[min(X)+Var(X), max(X)-Var(X))`, where
    /// `Var` is the population variance of the dataset's pitch values. When
    /// that interval is empty or inverted the spec falls back to
    /// `[min(X), max(X))` and the outcome carries a fallback note.
    pub fn from_pitch_values(pitch_values: &[f64], num_groups: usize) -> Result<PitchSpecOutcome> {
        if pitch_values.is_empty() {
            return Err(Error::invalid("pitch value list is empty"));
        }
        if pitch_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("pitch values must be finite"));
        }
        let min = pitch_values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = pitch_values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let var = population_variance(pitch_values);
        let lower = min + var;
        let upper = max - var;
        if lower < upper {
            Ok(PitchSpecOutcome {
                spec: Self::new(FeatureKind::CameraPitch, num_groups, lower, upper)?,
                fallback: None,
            })
        } else {
            if min >= max {
                return Err(Error::invalid(
                    "all pitch values identical; grouping range is degenerate",
                ));
            }
            Ok(PitchSpecOutcome {
                spec: Self::new(FeatureKind::CameraPitch, num_groups, min, max)?,
                fallback: Some(PitchFallback {
                    degenerate_lower: lower,
                    degenerate_upper: upper,
                }),
            })
        }
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn bin_width(&self) -> f64 {
        (self.upper - self.lower) / self.num_groups as f64
    }

    /// All `num_groups + 1` bin edges.
    pub fn edges(&self) -> Vec<f64> {
        (0..=self.num_groups)
            .map(|k| self.lower + k as f64 * (self.upper - self.lower) / self.num_groups as f64)
            .collect()
    }

    /// Map a feature value to its group id. Values below `lower` land in
    /// group 0 and values at or above `upper` in the last group.
    pub fn assign_group(&self, feature_value: f64) -> Result<usize> {
        if feature_value.is_nan() {
            return Err(Error::invalid("feature value is NaN"));
        }
        let v = feature_value.clamp(self.lower, self.upper);
        let raw = ((v - self.lower) / self.bin_width()).floor() as usize;
        Ok(raw.min(self.num_groups - 1))
    }
}

/// Population variance (dividing by N, not N-1).
pub fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Per-sample grouping features with a cached group id.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleFeatures {
    pub min_distance_px: f64,
    pub camera_pitch_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group_id_cache: Option<usize>,
}

impl SampleFeatures {
    pub fn new(min_distance_px: f64, camera_pitch_deg: f64) -> Result<Self> {
        if !min_distance_px.is_finite() || min_distance_px < 0.0 {
            return Err(Error::invalid(format!(
                "min_distance_px must be a nonnegative finite value, got {min_distance_px}"
            )));
        }
        if !camera_pitch_deg.is_finite() {
            return Err(Error::invalid("camera_pitch_deg must be finite"));
        }
        Ok(Self {
            min_distance_px,
            camera_pitch_deg,
            group_id_cache: None,
        })
    }

    pub fn feature_value(&self, kind: FeatureKind) -> f64 {
        match kind {
            FeatureKind::MinDistance => self.min_distance_px,
            FeatureKind::CameraPitch => self.camera_pitch_deg,
        }
    }

    /// Group id under `spec`, cached after the first call. The cache assumes
    /// a single spec per run.
    pub fn group_id(&mut self, spec: &GroupingSpec) -> Result<usize> {
        if let Some(id) = self.group_id_cache {
            return Ok(id);
        }
        let id = spec.assign_group(self.feature_value(spec.kind()))?;
        self.group_id_cache = Some(id);
        Ok(id)
    }
}

/// Per-person minimal distance to any other person's reference point.
/// A lone person counts as maximally isolated ([`MIN_DISTANCE_UPPER_PX`]).
pub fn min_distance_features(reference_points: &[Point]) -> Vec<f64> {
    let n = reference_points.len();
    if n == 1 {
        return vec![MIN_DISTANCE_UPPER_PX];
    }
    (0..n)
        .map(|i| {
            let mut best = f64::INFINITY;
            for j in 0..n {
                if i != j {
                    best = best.min(reference_points[i].distance(reference_points[j]));
                }
            }
            best
        })
        .collect()
}
