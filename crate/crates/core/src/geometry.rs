//! Pinhole camera model and the pitch-only epipolar geometry.
//!
//! Relative motion between consecutive frames is modelled as `X1 = R(phi) X0 + s t`
//! with a fixed, calibrated translation direction `t` and a single pitch angle
//! `phi`. The fundamental matrix is then `F(phi) = -K^-T [t]x R(phi) K^-1` and
//! correspondences satisfy `p1^T F p0 = 0`.

use core::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix3, Point2, Vector3};
use thiserror::Error;

/// Sampson denominators below this value (squared pixels) mark a point at the epipole.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("translation direction must be finite and non-zero")]
    InvalidTranslation,
    #[error("pitch angle {0} rad is outside (-pi/2, pi/2)")]
    PitchOutOfRange(f64),
    /// The Sampson denominator vanished; the pair sits on the epipole.
    #[error("degenerate geometry: Sampson denominator {0:e} below threshold")]
    DegenerateGeometry(f64),
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        if !(fx.is_finite() && fx > 0.0 && fy.is_finite() && fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics("focal lengths must be positive"));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidIntrinsics("image size must be positive"));
        }
        if !(cx >= 0.0 && cx < f64::from(width) && cy >= 0.0 && cy < f64::from(height)) {
            return Err(GeometryError::InvalidIntrinsics(
                "principal point must lie inside the image",
            ));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Full-HD camera with the principal point at the image centre.
    pub fn full_hd(focal: f64) -> Result<Self, GeometryError> {
        Self::new(focal, focal, 960.0, 540.0, 1920, 1080)
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }

    pub fn fy(&self) -> f64 {
        self.fy
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Focal length used for pitch compensation. Compensation acts on the
    /// vertical image coordinate, so this is `fy`.
    pub fn focal(&self) -> f64 {
        self.fy
    }

    pub fn k(&self) -> Matrix3<f64> {
        assemble_k(self)
    }

    pub fn k_inverse(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Projects a camera-frame point. Returns `None` for points not in front of the camera.
    pub fn project(&self, x: &Vector3<f64>) -> Option<Point2<f64>> {
        if x.z <= 0.0 {
            return None;
        }
        Some(Point2::new(
            self.fx * x.x / x.z + self.cx,
            self.fy * x.y / x.z + self.cy,
        ))
    }

    /// Back-projects a pixel to the camera-frame point at the given depth (`z`).
    pub fn unproject(&self, p: &Point2<f64>, depth: f64) -> Vector3<f64> {
        Vector3::new(
            (p.x - self.cx) / self.fx * depth,
            (p.y - self.cy) / self.fy * depth,
            depth,
        )
    }

    pub fn contains(&self, p: &Point2<f64>) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < f64::from(self.width) && p.y < f64::from(self.height)
    }
}

/// Unit-norm direction of ego translation in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranslationDirection(Vector3<f64>);

impl TranslationDirection {
    /// Normalizes `v`; fails on zero or non-finite input.
    pub fn new(v: Vector3<f64>) -> Result<Self, GeometryError> {
        let norm = libm::sqrt(v.dot(&v));
        if !norm.is_finite() || norm == 0.0 {
            return Err(GeometryError::InvalidTranslation);
        }
        Ok(Self(v / norm))
    }

    /// Straight ahead along the optical axis.
    pub fn forward() -> Self {
        Self(Vector3::new(0.0, 0.0, 1.0))
    }

    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }
}

/// Relative camera pitch in radians, strictly inside `(-pi/2, pi/2)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct PitchAngle(f64);

impl PitchAngle {
    pub const ZERO: PitchAngle = PitchAngle(0.0);

    pub fn new(phi: f64) -> Result<Self, GeometryError> {
        if phi.is_finite() && libm::fabs(phi) < FRAC_PI_2 {
            Ok(Self(phi))
        } else {
            Err(GeometryError::PitchOutOfRange(phi))
        }
    }

    pub fn radians(self) -> f64 {
        self.0
    }
}

/// A static-feature correspondence between frame `t` (`p0`) and frame `t+1` (`p1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPair {
    pub p0: Point2<f64>,
    pub p1: Point2<f64>,
    /// `false` for points on moving objects; those never enter the pitch fit.
    pub is_static: bool,
}

impl PointPair {
    pub fn new(p0: Point2<f64>, p1: Point2<f64>) -> Self {
        Self {
            p0,
            p1,
            is_static: true,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.p0.x.is_finite() && self.p0.y.is_finite() && self.p1.x.is_finite() && self.p1.y.is_finite()
    }
}

pub fn assemble_k(intr: &CameraIntrinsics) -> Matrix3<f64> {
    Matrix3::new(intr.fx, 0.0, intr.cx, 0.0, intr.fy, intr.cy, 0.0, 0.0, 1.0)
}

/// Rotation about the camera x-axis acting on camera-frame points:
/// `[[1, 0, 0], [0, cos, sin], [0, -sin, cos]]`.
///
/// With `y` down, a positive angle is the camera pitching nose-up: a point on
/// the optical axis moves to image row `cy + f tan(phi)`.
pub fn pitch_rotation(phi: f64) -> Matrix3<f64> {
    let (s, c) = libm::sincos(phi);
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, s, 0.0, -s, c)
}

/// Derivative of [`pitch_rotation`] with respect to the angle.
pub fn pitch_rotation_derivative(phi: f64) -> Matrix3<f64> {
    let (s, c) = libm::sincos(phi);
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, c, 0.0, -c, -s)
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Precomputed factors of `F(phi) = L R(phi) K^-1` with `L = -K^-T [t]x`.
#[derive(Debug, Clone, Copy)]
pub struct PitchFundamental {
    left: Matrix3<f64>,
    k_inv: Matrix3<f64>,
}

impl PitchFundamental {
    pub fn new(intr: &CameraIntrinsics, t: &TranslationDirection) -> Self {
        let k_inv = intr.k_inverse();
        let left = -(k_inv.transpose() * skew(t.vector()));
        Self { left, k_inv }
    }

    pub fn at(&self, phi: f64) -> Matrix3<f64> {
        self.left * pitch_rotation(phi) * self.k_inv
    }

    pub fn derivative_at(&self, phi: f64) -> Matrix3<f64> {
        self.left * pitch_rotation_derivative(phi) * self.k_inv
    }
}

/// `F(phi) = -K^-T [t]x R(phi) K^-1`, unnormalized.
pub fn fundamental_from_pitch(intr: &CameraIntrinsics, t: &TranslationDirection, phi: PitchAngle) -> Matrix3<f64> {
    PitchFundamental::new(intr, t).at(phi.radians())
}

/// Pieces of the Sampson error shared by the error and its derivative.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SampsonTerms {
    pub algebraic: f64,
    pub denominator: f64,
}

#[inline]
pub(crate) fn sampson_terms(p0: &Vector3<f64>, p1: &Vector3<f64>, f: &Matrix3<f64>) -> SampsonTerms {
    let fp0 = f * p0;
    let ftp1 = f.tr_mul(p1);
    SampsonTerms {
        algebraic: p1.dot(&fp0),
        denominator: fp0.x * fp0.x + fp0.y * fp0.y + ftp1.x * ftp1.x + ftp1.y * ftp1.y,
    }
}

#[inline]
pub(crate) fn lift(p: &Point2<f64>) -> Vector3<f64> {
    Vector3::new(p.x, p.y, 1.0)
}

/// First-order geometric error of a pair with respect to `F`, in squared pixels.
pub fn sampson_error(pair: &PointPair, f: &Matrix3<f64>) -> Result<f64, GeometryError> {
    let terms = sampson_terms(&lift(&pair.p0), &lift(&pair.p1), f);
    if !(terms.denominator >= DEGENERATE_DENOMINATOR) {
        return Err(GeometryError::DegenerateGeometry(terms.denominator));
    }
    Ok(terms.algebraic * terms.algebraic / terms.denominator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn identity_camera() -> CameraIntrinsics {
        CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 10, 10).unwrap()
    }

    #[test]
    fn k_identity_case() {
        assert_eq!(identity_camera().k(), Matrix3::identity());
    }

    #[test]
    fn k_full_hd() {
        let k = CameraIntrinsics::full_hd(1066.0).unwrap().k();
        assert_eq!(k, Matrix3::new(1066.0, 0.0, 960.0, 0.0, 1066.0, 540.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn k_determinant_and_inverse() {
        let intr = CameraIntrinsics::new(2.0, 3.0, 4.0, 5.0, 10, 10).unwrap();
        assert_relative_eq!(intr.k().determinant(), 6.0, epsilon = 1e-12);
        assert_relative_eq!(intr.k() * intr.k_inverse(), Matrix3::identity(), epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, -1.0, 0.0, 0.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 10.0, 0.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, -0.5, 10, 10).is_err());
        assert!(TranslationDirection::new(Vector3::zeros()).is_err());
        assert!(PitchAngle::new(FRAC_PI_2).is_err());
        assert!(PitchAngle::new(f64::NAN).is_err());
    }

    #[test]
    fn translation_is_normalized() {
        let t = TranslationDirection::new(Vector3::new(0.0, 3.0, 4.0)).unwrap();
        assert_relative_eq!(t.vector().norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rotation_zero_is_identity() {
        assert_eq!(pitch_rotation(0.0), Matrix3::identity());
    }

    #[test]
    fn rotation_quarter_turn() {
        // Nose-up convention: image-down axis is carried onto the backward axis.
        let v = pitch_rotation(FRAC_PI_2) * Vector3::new(0.0, 1.0, 0.0);
        assert_relative_eq!(v, Vector3::new(0.0, 0.0, -1.0), epsilon = 1e-15);
        let det = pitch_rotation(FRAC_PI_2).determinant();
        assert_relative_eq!(det, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rotation_inverse_symmetry() {
        let prod = pitch_rotation(0.01) * pitch_rotation(-0.01);
        assert_relative_eq!(prod, Matrix3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn positive_pitch_moves_axis_point_down() {
        let intr = CameraIntrinsics::full_hd(1000.0).unwrap();
        let x = pitch_rotation(0.01) * Vector3::new(0.0, 0.0, 20.0);
        let p = intr.project(&x).unwrap();
        assert_relative_eq!(p.y - 540.0, 1000.0 * libm::tan(0.01), epsilon = 1e-9);
    }

    #[test]
    fn fundamental_identity_case() {
        let f = fundamental_from_pitch(&identity_camera(), &TranslationDirection::forward(), PitchAngle::ZERO);
        let expected = Matrix3::new(0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_relative_eq!(f, expected, epsilon = 1e-15);
    }

    #[test]
    fn radial_motion_satisfies_constraint() {
        let f = fundamental_from_pitch(&identity_camera(), &TranslationDirection::forward(), PitchAngle::ZERO);
        let p0 = Vector3::new(2.0, 1.0, 1.0);
        let p1 = Vector3::new(4.0, 2.0, 1.0);
        assert_eq!(p1.dot(&(f * p0)), 0.0);
        let pair = PointPair::new(Point2::new(2.0, 1.0), Point2::new(4.0, 2.0));
        assert_eq!(sampson_error(&pair, &f).unwrap(), 0.0);
    }

    #[test]
    fn sampson_off_epipolar_line_matches_scalar_evaluation() {
        // F = [[0,1,0],[-1,0,0],[0,0,0]], p0 = (2,1,1), p1 = (4,3,1).
        // F p0 = (1, -2, 0), F^T p1 = (-3, 4, 0), p1^T F p0 = 4 - 6 = -2.
        // S = 4 / (1 + 4 + 9 + 16) = 2/15.
        let f = Matrix3::new(0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let pair = PointPair::new(Point2::new(2.0, 1.0), Point2::new(4.0, 3.0));
        assert_relative_eq!(sampson_error(&pair, &f).unwrap(), 2.0 / 15.0, epsilon = 1e-15);
    }

    #[test]
    fn sampson_at_epipole_is_degenerate() {
        let f = fundamental_from_pitch(&identity_camera(), &TranslationDirection::forward(), PitchAngle::ZERO);
        let pair = PointPair::new(Point2::new(0.0, 0.0), Point2::new(0.0, 0.0));
        assert!(matches!(
            sampson_error(&pair, &f),
            Err(GeometryError::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn exact_projection_has_zero_sampson_error() {
        let intr = CameraIntrinsics::full_hd(1066.0).unwrap();
        let t = TranslationDirection::forward();
        let phi = 0.02;
        let f = fundamental_from_pitch(&intr, &t, PitchAngle::new(phi).unwrap());
        let r = pitch_rotation(phi);
        for (i, depth) in [5.0, 12.0, 33.0, 50.0].iter().enumerate() {
            let px = Point2::new(100.0 + 400.0 * i as f64, 80.0 + 250.0 * i as f64);
            let x0 = intr.unproject(&px, *depth);
            let x1 = r * x0 - 0.18 * t.vector();
            let pair = PointPair::new(intr.project(&x0).unwrap(), intr.project(&x1).unwrap());
            assert!(sampson_error(&pair, &f).unwrap() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn fundamental_has_rank_two(
            phi in -1.2f64..1.2,
            fx in 200.0f64..3000.0,
            fy in 200.0f64..3000.0,
            tx in -1.0f64..1.0, ty in -1.0f64..1.0, tz in 0.1f64..1.0,
        ) {
            let intr = CameraIntrinsics::new(fx, fy, 640.0, 360.0, 1280, 720).unwrap();
            let t = TranslationDirection::new(Vector3::new(tx, ty, tz)).unwrap();
            let f = fundamental_from_pitch(&intr, &t, PitchAngle::new(phi).unwrap());
            let sv = f.svd(false, false).singular_values;
            let max = sv.max();
            let min = sv.min();
            prop_assert!(min < 1e-9 * max);
            prop_assert!(sv.iter().filter(|s| **s > 1e-9 * max).count() == 2);
        }

        #[test]
        fn sampson_scale_invariant_and_nonnegative(
            phi in -0.3f64..0.3,
            lambda in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
            x0 in 0.0f64..1920.0, y0 in 0.0f64..1080.0,
            dx in -30.0f64..30.0, dy in -30.0f64..30.0,
        ) {
            let intr = CameraIntrinsics::full_hd(1066.0).unwrap();
            let f = fundamental_from_pitch(&intr, &TranslationDirection::forward(), PitchAngle::new(phi).unwrap());
            let pair = PointPair::new(Point2::new(x0, y0), Point2::new(x0 + dx, y0 + dy));
            if let (Ok(a), Ok(b)) = (sampson_error(&pair, &f), sampson_error(&pair, &(f * lambda))) {
                prop_assert!(a >= 0.0);
                prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-12));
            }
        }

        #[test]
        fn rotation_is_orthonormal(phi in -0.5f64..0.5) {
            let r = pitch_rotation(phi);
            let err = (r.transpose() * r - Matrix3::identity()).abs().max();
            prop_assert!(err < 1e-12);
        }
    }
}
