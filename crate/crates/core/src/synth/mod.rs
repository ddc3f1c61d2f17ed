//! Deterministic synthetic scenes with known pitch and vehicle motion.
//!
//! The ego camera advances `ego_speed / fps` metres per frame along the
//! calibrated direction `t` and pitches by the sum of the active `EgoPitch`
//! pulses. Static points give exact correspondences under the pitch-only motion
//! model before noise is added. The preceding vehicle is a fronto-parallel grid
//! held at distance `d` in the ego body frame and lifted by the active
//! `VehicleDisplacement` pulses.

mod model;
pub mod suite;

pub use suite::{SequenceSpec, SuiteKind};

pub use model::{
    fit_signal_model, predict_response, response_vs_distance_experiment, DistanceResponse, SignalModelFit,
};

use alloc::vec::Vec;

use nalgebra::{Point2, Vector2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geometry::{pitch_rotation, CameraIntrinsics, PointPair, TranslationDirection};
use crate::pitch::CorrespondenceSet;
use crate::signal::{SignalError, TrackedPoint, VehicleTrack, MAX_TRACK_POINTS};

/// Maximum displacement of an injected outlier, per axis, in pixels.
pub const OUTLIER_DISPLACEMENT: f64 = 20.0;

/// Length of the controlled-experiment speed bump in metres.
pub const BUMP_LENGTH: f64 = 2.0;

const STREAM_STATIC: u64 = 0;
const STREAM_VEHICLE: u64 = 1;
const STREAM_IMU: u64 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("argument outside the model domain: {0}")]
    Domain(&'static str),
    #[error("degenerate fit: distances must not all be equal")]
    DegenerateFit,
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SceneConfig {
    pub seed: u64,
    pub n_static_points: usize,
    /// Static point depth range in metres.
    pub depth_min: f64,
    pub depth_max: f64,
    /// Ego speed in m/s.
    pub ego_speed: f64,
    pub fps: f64,
    /// Gaussian pixel noise on every tracked coordinate.
    pub noise_sigma: f64,
    pub outlier_fraction: f64,
    /// When false, outliers are flagged non-static so the estimator never sees them.
    pub outliers_flagged_static: bool,
    /// Sequence length in frames.
    pub duration: usize,
    pub imu: Option<ImuConfig>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_static_points: 300,
            depth_min: 4.0,
            depth_max: 60.0,
            ego_speed: 5.56,
            fps: 30.0,
            noise_sigma: 0.5,
            outlier_fraction: 0.1,
            outliers_flagged_static: true,
            duration: 300,
            imu: None,
        }
    }
}

impl SceneConfig {
    /// No pixel noise and no outliers.
    pub fn noise_free() -> Self {
        Self {
            noise_sigma: 0.0,
            outlier_fraction: 0.0,
            ..Self::default()
        }
    }

    /// Ego translation between consecutive frames.
    pub fn step(&self) -> f64 {
        self.ego_speed / self.fps
    }

    /// Frames needed to cross a speed bump at the configured speed.
    pub fn bump_duration(&self) -> f64 {
        BUMP_LENGTH / self.ego_speed * self.fps
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.depth_min > 0.0 && self.depth_max > self.depth_min && self.depth_max.is_finite()) {
            return Err(SynthError::Config("depth range must be positive and non-empty"));
        }
        if !(self.outlier_fraction >= 0.0 && self.outlier_fraction < 0.5) {
            return Err(SynthError::Config("outlier_fraction must be in [0, 0.5)"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(SynthError::Config("fps must be positive"));
        }
        if !(self.ego_speed.is_finite() && self.ego_speed >= 0.0) {
            return Err(SynthError::Config("ego_speed must be non-negative"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(SynthError::Config("noise_sigma must be non-negative"));
        }
        if self.duration < 2 {
            return Err(SynthError::Config("duration must be at least 2 frames"));
        }
        if let Some(imu) = &self.imu {
            imu.validate()?;
        }
        Ok(())
    }
}

/// Gyroscope pitch-rate channel with a random-walk bias.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ImuConfig {
    /// Initial rate bias in rad/s.
    pub bias: f64,
    /// Bias random-walk increment per frame, rad/s.
    pub bias_walk_sigma: f64,
    /// White rate noise per sample, rad/s.
    pub rate_noise_sigma: f64,
}

impl Default for ImuConfig {
    fn default() -> Self {
        Self {
            bias: 0.003,
            bias_walk_sigma: 2e-4,
            rate_noise_sigma: 0.002,
        }
    }
}

impl ImuConfig {
    fn validate(&self) -> Result<(), SynthError> {
        if ![self.bias, self.bias_walk_sigma, self.rate_noise_sigma]
            .iter()
            .all(|v| v.is_finite())
            || self.bias_walk_sigma < 0.0
            || self.rate_noise_sigma < 0.0
        {
            return Err(SynthError::Config("imu parameters must be finite, sigmas non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BumpKind {
    /// Camera pitch pulse, amplitude in radians.
    EgoPitch,
    /// Upward displacement of the preceding vehicle, amplitude in metres.
    VehicleDisplacement,
}

/// Half-sine pulse centred on `apex_frame`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct BumpProfile {
    pub kind: BumpKind,
    pub apex_frame: usize,
    /// Support length in frames.
    pub duration: f64,
    pub amplitude: f64,
}

impl BumpProfile {
    pub fn new(kind: BumpKind, apex_frame: usize, duration: f64, amplitude: f64) -> Self {
        Self {
            kind,
            apex_frame,
            duration,
            amplitude,
        }
    }

    pub fn start(&self) -> f64 {
        self.apex_frame as f64 - 0.5 * self.duration
    }

    pub fn end(&self) -> f64 {
        self.apex_frame as f64 + 0.5 * self.duration
    }

    pub fn value(&self, frame: f64) -> f64 {
        let u = (frame - self.start()) / self.duration;
        if (0.0..=1.0).contains(&u) {
            self.amplitude * libm::sin(core::f64::consts::PI * u)
        } else {
            0.0
        }
    }

    fn validate(&self, frames: usize) -> Result<(), SynthError> {
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(SynthError::Config("bump amplitude must be non-negative"));
        }
        if !(self.duration.is_finite() && self.duration >= 2.0) {
            return Err(SynthError::Config("bump duration must be at least 2 frames"));
        }
        if self.apex_frame >= frames {
            return Err(SynthError::Config("bump apex lies outside the sequence"));
        }
        if self.kind == BumpKind::EgoPitch && self.amplitude >= 1.0 {
            return Err(SynthError::Config("ego pitch amplitude must stay below 1 rad"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(untagged))]
pub enum VehicleDistance {
    Constant(f64),
    PerFrame(Vec<f64>),
}

impl VehicleDistance {
    fn at(&self, frame: usize) -> f64 {
        match self {
            Self::Constant(d) => *d,
            Self::PerFrame(d) => d[frame],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct VehicleConfig {
    /// Distance `d` to the rear plane in metres.
    pub distance: VehicleDistance,
    pub rear_width: f64,
    pub rear_height: f64,
    pub n_points: usize,
    /// Height of the rear-plane centre below the camera, metres.
    pub height_below_camera: f64,
    pub lateral_offset: f64,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self {
            distance: VehicleDistance::Constant(10.0),
            rear_width: 1.8,
            rear_height: 1.2,
            n_points: MAX_TRACK_POINTS,
            height_below_camera: 0.5,
            lateral_offset: 0.0,
        }
    }
}

impl VehicleConfig {
    pub fn at_distance(d: f64) -> Self {
        Self {
            distance: VehicleDistance::Constant(d),
            ..Self::default()
        }
    }

    fn validate(&self, frames: usize) -> Result<(), SynthError> {
        let ok = match &self.distance {
            VehicleDistance::Constant(d) => *d > 1.0,
            VehicleDistance::PerFrame(d) => d.len() == frames && d.iter().all(|d| *d > 1.0),
        };
        if !ok {
            return Err(SynthError::Config("vehicle distance must exceed 1 m for every frame"));
        }
        if !(4..=MAX_TRACK_POINTS).contains(&self.n_points) {
            return Err(SynthError::Config("vehicle n_points must be in 4..=400"));
        }
        if !(self.rear_width > 0.0 && self.rear_height > 0.0) {
            return Err(SynthError::Config("vehicle rear size must be positive"));
        }
        Ok(())
    }

    /// Grid offsets `(u, v)` on the rear plane, `v` pointing down.
    fn grid(&self) -> Vec<Vector2<f64>> {
        let aspect = self.rear_width / self.rear_height;
        let n = self.n_points;
        let cols = (libm::round(libm::sqrt(n as f64 * aspect)) as usize).clamp(1, n);
        let rows = n.div_ceil(cols);
        (0..n)
            .map(|i| {
                let (r, c) = (i / cols, i % cols);
                Vector2::new(
                    (c as f64 + 0.5) / cols as f64 * self.rear_width - 0.5 * self.rear_width,
                    (r as f64 + 0.5) / rows as f64 * self.rear_height - 0.5 * self.rear_height,
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Cumulative camera pitch per frame (radians, frame 0 = 0 unless a pulse is active).
    pub pitch: Vec<f64>,
    /// Upward vehicle displacement per frame, metres.
    pub vehicle_displacement: Vec<f64>,
    /// Apex frame of every vehicle displacement pulse with non-zero amplitude.
    pub anomaly_apexes: Vec<usize>,
    /// Integrated gyroscope pitch, when an IMU channel is configured.
    pub imu_pitch: Option<Vec<f64>>,
}

impl GroundTruth {
    /// Pitch of each frame relative to frame 0, as an estimator would report it.
    pub fn relative_to_start(&self) -> Vec<f64> {
        let p0 = self.pitch[0];
        self.pitch.iter().map(|p| p - p0).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    /// `correspondences[k]` maps frame `k` to `k + 1`.
    pub correspondences: Vec<CorrespondenceSet>,
    pub track: VehicleTrack,
    pub truth: GroundTruth,
}

fn channel(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated non-negative")
}

/// Exact correspondences of `n` random static points under relative pitch `phi`
/// and a forward step, with optional noise and outliers.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_pairs<R: Rng>(
    rng: &mut R,
    n: usize,
    depth_range: (f64, f64),
    intr: &CameraIntrinsics,
    t: &TranslationDirection,
    step: f64,
    phi: f64,
    noise_sigma: f64,
    outlier_fraction: f64,
    outliers_static: bool,
) -> CorrespondenceSet {
    let r = pitch_rotation(phi);
    let (w, h) = (f64::from(intr.width()), f64::from(intr.height()));
    let mut pairs = Vec::with_capacity(n);
    while pairs.len() < n {
        let p0 = Point2::new(rng.random_range(0.0..w), rng.random_range(0.0..h));
        let x0 = intr.unproject(&p0, rng.random_range(depth_range.0..depth_range.1));
        let x1 = r * x0 - step * t.vector();
        match intr.project(&x1) {
            Some(p1) if intr.contains(&p1) => pairs.push(PointPair::new(p0, p1)),
            _ => continue,
        }
    }
    if noise_sigma > 0.0 {
        let noise = gaussian(noise_sigma);
        for p in &mut pairs {
            p.p0.x += noise.sample(rng);
            p.p0.y += noise.sample(rng);
            p.p1.x += noise.sample(rng);
            p.p1.y += noise.sample(rng);
        }
    }
    let n_out = libm::round(outlier_fraction * n as f64) as usize;
    if n_out > 0 {
        for i in sample(rng, n, n_out.min(n)).iter() {
            let p = &mut pairs[i];
            p.p1 = p.p0
                + Vector2::new(
                    rng.random_range(-OUTLIER_DISPLACEMENT..=OUTLIER_DISPLACEMENT),
                    rng.random_range(-OUTLIER_DISPLACEMENT..=OUTLIER_DISPLACEMENT),
                );
            p.is_static = outliers_static;
        }
    }
    pairs
}

/// Generates one sequence. Identical inputs give bit-identical output.
pub fn generate_sequence(
    scene: &SceneConfig,
    bumps: &[BumpProfile],
    vehicle: &VehicleConfig,
    intr: &CameraIntrinsics,
    t: &TranslationDirection,
) -> Result<SyntheticSequence, SynthError> {
    scene.validate()?;
    vehicle.validate(scene.duration)?;
    for b in bumps {
        b.validate(scene.duration)?;
    }
    let frames = scene.duration;
    let sum_of =
        |kind: BumpKind, k: usize| -> f64 { bumps.iter().filter(|b| b.kind == kind).map(|b| b.value(k as f64)).sum() };
    let pitch: Vec<f64> = (0..frames).map(|k| sum_of(BumpKind::EgoPitch, k)).collect();
    let lift: Vec<f64> = (0..frames).map(|k| sum_of(BumpKind::VehicleDisplacement, k)).collect();

    let mut rng = channel(scene.seed, STREAM_STATIC);
    let correspondences = (0..frames - 1)
        .map(|k| {
            synthesize_pairs(
                &mut rng,
                scene.n_static_points,
                (scene.depth_min, scene.depth_max),
                intr,
                t,
                scene.step(),
                pitch[k + 1] - pitch[k],
                scene.noise_sigma,
                scene.outlier_fraction,
                scene.outliers_flagged_static,
            )
        })
        .collect();

    let mut rng = channel(scene.seed, STREAM_VEHICLE);
    let noise = gaussian(scene.noise_sigma);
    let grid = vehicle.grid();
    let track_frames = (0..frames)
        .map(|k| {
            let r = pitch_rotation(pitch[k]);
            let d = vehicle.distance.at(k);
            grid.iter()
                .map(|g| {
                    let body = nalgebra::Vector3::new(
                        vehicle.lateral_offset + g.x,
                        vehicle.height_below_camera + g.y - lift[k],
                        d,
                    );
                    match intr.project(&(r * body)) {
                        Some(mut p) => {
                            if scene.noise_sigma > 0.0 {
                                p.x += noise.sample(&mut rng);
                                p.y += noise.sample(&mut rng);
                            }
                            TrackedPoint {
                                x: p.x,
                                y: p.y,
                                valid: intr.contains(&p),
                            }
                        }
                        None => TrackedPoint {
                            x: f64::NAN,
                            y: f64::NAN,
                            valid: false,
                        },
                    }
                })
                .collect()
        })
        .collect();
    let track = VehicleTrack::new(scene.fps, track_frames)?;

    let imu_pitch = scene.imu.map(|imu| integrate_imu(&imu, &pitch, scene.fps, scene.seed));

    let mut anomaly_apexes: Vec<usize> = bumps
        .iter()
        .filter(|b| b.kind == BumpKind::VehicleDisplacement && b.amplitude > 0.0)
        .map(|b| b.apex_frame)
        .collect();
    anomaly_apexes.sort_unstable();

    Ok(SyntheticSequence {
        correspondences,
        track,
        truth: GroundTruth {
            pitch,
            vehicle_displacement: lift,
            anomaly_apexes,
            imu_pitch,
        },
    })
}

/// Integrates a biased, noisy pitch-rate measurement of the true pitch track.
fn integrate_imu(imu: &ImuConfig, pitch: &[f64], fps: f64, seed: u64) -> Vec<f64> {
    let mut rng = channel(seed, STREAM_IMU);
    let walk = gaussian(imu.bias_walk_sigma);
    let white = gaussian(imu.rate_noise_sigma);
    let dt = 1.0 / fps;
    let mut bias = imu.bias;
    let mut angle = 0.0;
    let mut out = Vec::with_capacity(pitch.len());
    out.push(angle);
    for w in pitch.windows(2) {
        let rate = (w[1] - w[0]) / dt;
        bias += walk.sample(&mut rng);
        angle += (rate + bias + white.sample(&mut rng)) * dt;
        out.push(angle);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{fundamental_from_pitch, sampson_error, PitchAngle};
    use crate::signal::aggregate_vertical;

    fn camera() -> CameraIntrinsics {
        CameraIntrinsics::full_hd(1066.0).unwrap()
    }

    fn short_scene() -> SceneConfig {
        SceneConfig {
            duration: 60,
            n_static_points: 50,
            ..SceneConfig::noise_free()
        }
    }

    #[test]
    fn flat_noise_free_is_exact_and_constant() {
        let t = TranslationDirection::forward();
        let seq = generate_sequence(&short_scene(), &[], &VehicleConfig::default(), &camera(), &t).unwrap();
        let f = fundamental_from_pitch(&camera(), &t, PitchAngle::ZERO);
        for set in &seq.correspondences {
            for p in set {
                assert!(sampson_error(p, &f).unwrap() < 1e-12);
            }
        }
        let y = aggregate_vertical(&seq.track).unwrap().values;
        assert!(y.iter().all(|v| *v == y[0]));
        assert!(seq.truth.anomaly_apexes.is_empty());
    }

    #[test]
    fn pitched_correspondences_are_exact() {
        let t = TranslationDirection::forward();
        let bump = BumpProfile::new(BumpKind::EgoPitch, 30, 11.0, 0.03);
        let seq = generate_sequence(&short_scene(), &[bump], &VehicleConfig::default(), &camera(), &t).unwrap();
        for (k, set) in seq.correspondences.iter().enumerate() {
            let phi = seq.truth.pitch[k + 1] - seq.truth.pitch[k];
            let f = fundamental_from_pitch(&camera(), &t, PitchAngle::new(phi).unwrap());
            assert!(set.iter().all(|p| sampson_error(p, &f).unwrap() < 1e-12));
        }
        let peak = seq.truth.pitch.iter().cloned().fold(0.0, f64::max);
        assert_eq!(peak, 0.03);
        assert_eq!(seq.truth.pitch[30], 0.03);
    }

    #[test]
    fn vehicle_displacement_matches_one_over_d() {
        let t = TranslationDirection::forward();
        let bump = BumpProfile::new(BumpKind::VehicleDisplacement, 30, 11.0, 0.06);
        let seq = generate_sequence(
            &short_scene(),
            &[bump],
            &VehicleConfig::at_distance(10.0),
            &camera(),
            &t,
        )
        .unwrap();
        let y = aggregate_vertical(&seq.track).unwrap().values;
        let peak = y.iter().map(|v| (v - y[0]).abs()).fold(0.0, f64::max);
        assert!((peak - 6.396).abs() < 0.02 * 6.396, "peak {peak}");
        assert_eq!(seq.truth.anomaly_apexes, alloc::vec![30]);
    }

    #[test]
    fn same_seed_same_output() {
        let t = TranslationDirection::forward();
        let scene = SceneConfig {
            seed: 42,
            duration: 40,
            imu: Some(ImuConfig::default()),
            ..SceneConfig::default()
        };
        let bumps = [BumpProfile::new(BumpKind::EgoPitch, 20, 11.0, 0.02)];
        let a = generate_sequence(&scene, &bumps, &VehicleConfig::default(), &camera(), &t).unwrap();
        let b = generate_sequence(&scene, &bumps, &VehicleConfig::default(), &camera(), &t).unwrap();
        assert_eq!(a, b);
        let c = generate_sequence(
            &SceneConfig { seed: 43, ..scene },
            &bumps,
            &VehicleConfig::default(),
            &camera(),
            &t,
        )
        .unwrap();
        assert_ne!(a.correspondences, c.correspondences);
    }

    #[test]
    fn outliers_injected_and_flagged() {
        let t = TranslationDirection::forward();
        let scene = SceneConfig {
            outlier_fraction: 0.2,
            outliers_flagged_static: false,
            n_static_points: 100,
            duration: 3,
            ..SceneConfig::noise_free()
        };
        let seq = generate_sequence(&scene, &[], &VehicleConfig::default(), &camera(), &t).unwrap();
        for set in &seq.correspondences {
            assert_eq!(set.iter().filter(|p| !p.is_static).count(), 20);
        }
    }

    #[test]
    fn rejects_invalid_configs() {
        let t = TranslationDirection::forward();
        let v = VehicleConfig::default();
        let bad = SceneConfig {
            outlier_fraction: 0.5,
            ..SceneConfig::default()
        };
        assert!(matches!(
            generate_sequence(&bad, &[], &v, &camera(), &t),
            Err(SynthError::Config(_))
        ));
        let bad = SceneConfig {
            depth_min: 0.0,
            ..SceneConfig::default()
        };
        assert!(generate_sequence(&bad, &[], &v, &camera(), &t).is_err());
        let near = VehicleConfig::at_distance(0.5);
        assert!(generate_sequence(&SceneConfig::default(), &[], &near, &camera(), &t).is_err());
        let bump = BumpProfile::new(BumpKind::VehicleDisplacement, 10, 1.0, 0.06);
        assert!(generate_sequence(&SceneConfig::default(), &[bump], &v, &camera(), &t).is_err());
        let bump = BumpProfile::new(BumpKind::VehicleDisplacement, 10, 11.0, -0.06);
        assert!(generate_sequence(&SceneConfig::default(), &[bump], &v, &camera(), &t).is_err());
    }

    #[test]
    fn half_sine_shape() {
        let b = BumpProfile::new(BumpKind::EgoPitch, 20, 10.0, 2.0);
        assert_eq!(b.value(20.0), 2.0);
        assert_eq!(b.value(14.0), 0.0);
        assert!((b.value(17.5) - 2.0 * libm::sin(core::f64::consts::PI * 0.25)).abs() < 1e-15);
        assert!((SceneConfig::default().bump_duration() - 10.79).abs() < 0.01);
    }

    #[test]
    fn imu_drifts() {
        let t = TranslationDirection::forward();
        let scene = SceneConfig {
            imu: Some(ImuConfig::default()),
            ..short_scene()
        };
        let seq = generate_sequence(&scene, &[], &VehicleConfig::default(), &camera(), &t).unwrap();
        let imu = seq.truth.imu_pitch.unwrap();
        assert_eq!(imu.len(), 60);
        assert!(imu[59].abs() > 1e-3);
    }
}
