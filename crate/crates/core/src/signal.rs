//! Visual response of the preceding vehicle and anomaly detection.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::{CameraIntrinsics, TranslationDirection};
use crate::pitch::{estimate_pitch_track, CorrespondenceSet, EstimatorConfig, EstimatorError, PitchTrack};

/// Upper bound on tracked points per frame.
pub const MAX_TRACK_POINTS: usize = 400;

/// One-second window at 30 fps.
pub const DEFAULT_WINDOW: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SignalError {
    #[error("track has no valid point in any frame")]
    EmptyTrack,
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("series of length {len} is shorter than window {window}")]
    SeriesTooShort { len: usize, window: usize },
    #[error("window must be at least 2 frames, got {0}")]
    InvalidWindow(usize),
    #[error("frame {frame} has {count} points, limit is {MAX_TRACK_POINTS}")]
    TooManyPoints { frame: usize, count: usize },
    #[error("invalid track: {0}")]
    InvalidTrack(&'static str),
    #[error("invalid detection parameters: {0}")]
    InvalidDetection(&'static str),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedPoint {
    pub x: f64,
    pub y: f64,
    pub valid: bool,
}

/// Tracked points on the rear of the preceding vehicle, per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleTrack {
    fps: f64,
    frames: Vec<Vec<TrackedPoint>>,
}

impl VehicleTrack {
    pub fn new(fps: f64, frames: Vec<Vec<TrackedPoint>>) -> Result<Self, SignalError> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(SignalError::InvalidTrack("fps must be positive"));
        }
        if let Some((frame, pts)) = frames.iter().enumerate().find(|(_, p)| p.len() > MAX_TRACK_POINTS) {
            return Err(SignalError::TooManyPoints {
                frame,
                count: pts.len(),
            });
        }
        Ok(Self { fps, frames })
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frames(&self) -> &[Vec<TrackedPoint>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Mean vertical position per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub values: Vec<f64>,
    /// Frames without any valid point, filled by interpolation.
    pub interpolated: Vec<bool>,
}

/// Mean of the valid points' `y` per frame. Frames without valid points are
/// linearly interpolated between the nearest valid neighbours (held constant at
/// the sequence ends) and flagged.
pub fn aggregate_vertical(track: &VehicleTrack) -> Result<Aggregate, SignalError> {
    let raw: Vec<Option<f64>> = track
        .frames
        .iter()
        .map(|pts| {
            let (sum, n) = pts
                .iter()
                .filter(|p| p.valid && p.y.is_finite())
                .fold((0.0, 0usize), |(s, n), p| (s + p.y, n + 1));
            (n > 0).then(|| sum / n as f64)
        })
        .collect();

    let known: Vec<usize> = raw.iter().enumerate().filter_map(|(i, v)| v.map(|_| i)).collect();
    if known.is_empty() {
        return Err(SignalError::EmptyTrack);
    }

    let mut values = Vec::with_capacity(raw.len());
    let mut interpolated = Vec::with_capacity(raw.len());
    let mut next = 0usize;
    for (i, v) in raw.iter().enumerate() {
        if let Some(v) = v {
            values.push(*v);
            interpolated.push(false);
            next += 1;
            continue;
        }
        interpolated.push(true);
        let left = next.checked_sub(1).map(|k| known[k]);
        let right = known.get(next).copied();
        let value = match (left, right) {
            (Some(l), Some(r)) => {
                let (yl, yr) = (raw[l].unwrap_or(0.0), raw[r].unwrap_or(0.0));
                yl + (yr - yl) * (i - l) as f64 / (r - l) as f64
            }
            (Some(l), None) => raw[l].unwrap_or(0.0),
            (None, Some(r)) => raw[r].unwrap_or(0.0),
            (None, None) => unreachable!("at least one frame is known"),
        };
        values.push(value);
    }
    Ok(Aggregate { values, interpolated })
}

/// `y_c(t) = y(t) - f tan(phi(t))` for per-frame cumulative angles.
pub fn compensate_angles(y_hat: &[f64], angles: &[f64], focal: f64) -> Result<Vec<f64>, SignalError> {
    if y_hat.len() != angles.len() {
        return Err(SignalError::LengthMismatch {
            expected: y_hat.len(),
            found: angles.len(),
        });
    }
    Ok(y_hat
        .iter()
        .zip(angles)
        .map(|(y, phi)| y - focal * libm::tan(*phi))
        .collect())
}

/// Removes the ego pitch from the aggregated trajectory using the track's
/// cumulative angles and `fy`.
pub fn compensate(y_hat: &[f64], pitch: &PitchTrack, intr: &CameraIntrinsics) -> Result<Vec<f64>, SignalError> {
    if y_hat.len() != pitch.frame_count() {
        return Err(SignalError::LengthMismatch {
            expected: y_hat.len(),
            found: pitch.frame_count(),
        });
    }
    compensate_angles(y_hat, &pitch.cumulative(), intr.focal())
}

/// Population standard deviation over the trailing window `[t - T + 1, t]`.
/// The first `T - 1` entries are `None`.
pub fn windowed_std(y: &[f64], window: usize) -> Result<Vec<Option<f64>>, SignalError> {
    if window < 2 {
        return Err(SignalError::InvalidWindow(window));
    }
    if y.len() < window {
        return Err(SignalError::SeriesTooShort { len: y.len(), window });
    }
    let n = window as f64;
    let mut out = vec![None; window - 1];
    out.extend(y.windows(window).map(|w| {
        // Shift by the first sample so a constant window is exactly zero.
        let origin = w[0];
        let mean = w.iter().map(|v| v - origin).sum::<f64>() / n;
        let var = w.iter().map(|v| {
            let d = v - origin - mean;
            d * d
        });
        Some(libm::sqrt(var.sum::<f64>() / n))
    }));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionEvent {
    /// Apex frame: the surviving local maximum.
    pub frame: usize,
    pub response: f64,
    /// Contiguous run of frames around the apex at or above the threshold.
    pub start: usize,
    pub end: usize,
}

/// Thresholded local maxima with non-maximum suppression.
///
/// A frame is a candidate when `s >= threshold` and it is not smaller than either
/// defined neighbour. Candidates are visited by decreasing response (earlier frame
/// first on ties); one is kept unless a kept event lies within `nms_radius` frames.
pub fn detect(s: &[Option<f64>], threshold: f64, nms_radius: usize) -> Result<Vec<DetectionEvent>, SignalError> {
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(SignalError::InvalidDetection("threshold must be positive"));
    }
    if nms_radius == 0 {
        return Err(SignalError::InvalidDetection("nms_radius must be at least 1"));
    }
    let at = |i: usize| s.get(i).copied().flatten();
    let mut candidates: Vec<(usize, f64)> = s
        .iter()
        .enumerate()
        .filter_map(|(i, v)| {
            let v = (*v)?;
            if !(v >= threshold) {
                return None;
            }
            let left = i.checked_sub(1).and_then(at).unwrap_or(f64::NEG_INFINITY);
            let right = at(i + 1).unwrap_or(f64::NEG_INFINITY);
            (v >= left && v >= right).then_some((i, v))
        })
        .collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut kept: Vec<DetectionEvent> = Vec::new();
    for (frame, response) in candidates {
        if kept.iter().any(|e| e.frame.abs_diff(frame) <= nms_radius) {
            continue;
        }
        let above = |i: usize| at(i).is_some_and(|v| v >= threshold);
        let mut start = frame;
        while start > 0 && above(start - 1) {
            start -= 1;
        }
        let mut end = frame;
        while above(end + 1) {
            end += 1;
        }
        kept.push(DetectionEvent {
            frame,
            response,
            start,
            end,
        });
    }
    kept.sort_by_key(|e| e.frame);
    Ok(kept)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PipelineConfig {
    /// Window length `T` in frames.
    pub window: usize,
    /// Detection threshold in pixels.
    pub threshold: f64,
    /// NMS radius in frames; `None` uses the window length.
    pub nms_radius: Option<usize>,
    pub compensation: bool,
    pub estimator: EstimatorConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            threshold: 1.0,
            nms_radius: None,
            compensation: true,
            estimator: EstimatorConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn nms_radius(&self) -> usize {
        self.nms_radius.unwrap_or(self.window)
    }
}

/// Per-frame series produced by the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseSeries {
    pub window: usize,
    pub y_hat: Vec<f64>,
    /// Compensated trajectory; equal to `y_hat` when compensation is disabled.
    pub y_comp: Vec<f64>,
    /// Response used for detection.
    pub s: Vec<Option<f64>>,
    /// Response of the uncompensated trajectory, for baseline comparison.
    pub s_uncompensated: Vec<Option<f64>>,
    pub interpolated: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub pitch: PitchTrack,
    pub response: ResponseSeries,
    pub detections: Vec<DetectionEvent>,
}

/// Pitch track, compensation, windowed std and detection for one sequence.
///
/// `correspondences[k]` holds the matches from frame `k` to `k + 1`, so there must be
/// exactly one fewer set than track frames.
pub fn run_pipeline(
    track: &VehicleTrack,
    correspondences: &[CorrespondenceSet],
    intr: &CameraIntrinsics,
    t: &TranslationDirection,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput, SignalError> {
    if correspondences.len() + 1 != track.len() {
        return Err(SignalError::LengthMismatch {
            expected: track.len().saturating_sub(1),
            found: correspondences.len(),
        });
    }
    let aggregate = aggregate_vertical(track)?;
    let pitch = estimate_pitch_track(correspondences, intr, t, &cfg.estimator)?;
    let y_comp = if cfg.compensation {
        compensate(&aggregate.values, &pitch, intr)?
    } else {
        aggregate.values.clone()
    };
    let s_uncompensated = windowed_std(&aggregate.values, cfg.window)?;
    let s = if cfg.compensation {
        windowed_std(&y_comp, cfg.window)?
    } else {
        s_uncompensated.clone()
    };
    let detections = detect(&s, cfg.threshold, cfg.nms_radius())?;
    Ok(PipelineOutput {
        pitch,
        response: ResponseSeries {
            window: cfg.window,
            y_hat: aggregate.values,
            y_comp,
            s,
            s_uncompensated,
            interpolated: aggregate.interpolated,
        },
        detections,
    })
}
