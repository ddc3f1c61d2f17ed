//! Road-surface anomaly detection from the vertical motion of a preceding vehicle.
//!
//! The pipeline aggregates tracked points on the rear of the vehicle ahead into a
//! single vertical trajectory, removes the ego camera's pitch rotation (estimated
//! from static-scene correspondences with a one-parameter robust epipolar fit),
//! and thresholds a trailing-window standard deviation of the compensated
//! trajectory.
//!
//! Modules:
//! - [`geometry`]: pinhole intrinsics, pitch rotation, pitch-parameterized
//!   fundamental matrix, Sampson error.
//! - [`pitch`]: Cauchy-robust Levenberg-Marquardt pitch estimator with warm start.
//! - [`signal`]: aggregation, compensation, windowed std, detection with NMS.
//! - [`synth`]: deterministic synthetic scene generator and the 1/d response model.
//! - [`eval`]: ROC/AUC, cross-validated thresholds, FPR vs. rotation intensity.
//!
//! # Sign conventions
//!
//! Image coordinates have their origin top-left with `y` pointing down; the camera
//! frame is `x` right, `y` down, `z` forward. A positive pitch angle raises the
//! optical axis (nose up), which moves scene content *down* in the image by about
//! `f * tan(phi)`. The compensation `y_c = y - f * tan(phi)` removes that shift.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod eval;
pub mod geometry;
pub mod pitch;
pub mod signal;
pub mod synth;

pub use geometry::{CameraIntrinsics, PitchAngle, PointPair, TranslationDirection};
pub use nalgebra;
pub use pitch::{EstimatorConfig, PitchEstimate, PitchTrack};
pub use signal::{DetectionEvent, PipelineConfig, ResponseSeries, VehicleTrack};
