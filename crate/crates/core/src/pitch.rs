//! Robust one-parameter pitch estimation.
//!
//! For each frame pair the relative pitch minimizes
//! `sum_i rho(S(p_i(t), p_i(t+1), F(phi)))` where `S` is the Sampson error and
//! `rho(z) = ln(1 + z)` the Cauchy loss. The minimization is a damped
//! (Levenberg-Marquardt) iteration on the single angle, started from the previous
//! frame's solution.

use alloc::vec::Vec;

use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::{
    lift, sampson_terms, CameraIntrinsics, PitchFundamental, PointPair, TranslationDirection, DEGENERATE_DENOMINATOR,
};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EstimatorError {
    #[error("loss argument {0} is negative")]
    Domain(f64),
    #[error("insufficient correspondences: {usable} usable, {required} required")]
    InsufficientCorrespondences { usable: usize, required: usize },
    #[error("invalid estimator configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Static-feature matches between one frame and the next.
pub type CorrespondenceSet = Vec<PointPair>;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EstimatorConfig {
    pub max_iterations: usize,
    /// Stop when |d objective / d phi| falls below this.
    pub gradient_tolerance: f64,
    /// Stop when an accepted step is shorter than this (radians).
    pub step_tolerance: f64,
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    /// Search domain is `[-phi_clamp, phi_clamp]`.
    pub phi_clamp: f64,
    pub min_pairs: usize,
    /// Cauchy scale `c`: `rho(z) = c * ln(1 + z / c)`. 1.0 is the plain `ln(1 + z)`.
    pub loss_scale: f64,
    /// Leaky integration factor for the cumulative pitch; 1.0 is a plain running sum.
    pub cumulative_decay: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-9,
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 0.1,
            phi_clamp: 0.3,
            min_pairs: 8,
            loss_scale: 1.0,
            cumulative_decay: 1.0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        let positive = [
            self.gradient_tolerance,
            self.step_tolerance,
            self.initial_damping,
            self.damping_up,
            self.damping_down,
            self.phi_clamp,
            self.loss_scale,
            self.cumulative_decay,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(EstimatorError::InvalidConfig("all parameters must be positive"));
        }
        if self.max_iterations == 0 || self.min_pairs == 0 {
            return Err(EstimatorError::InvalidConfig("counts must be positive"));
        }
        if self.phi_clamp >= core::f64::consts::FRAC_PI_2 {
            return Err(EstimatorError::InvalidConfig("phi_clamp must be below pi/2"));
        }
        if self.damping_up <= 1.0 || self.damping_down >= 1.0 {
            return Err(EstimatorError::InvalidConfig("damping factors must straddle 1"));
        }
        if self.cumulative_decay > 1.0 {
            return Err(EstimatorError::InvalidConfig("cumulative_decay must not exceed 1"));
        }
        Ok(())
    }
}

/// Cauchy loss `rho(z) = c ln(1 + z / c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchyLoss {
    pub scale: f64,
}

impl Default for CauchyLoss {
    fn default() -> Self {
        Self { scale: 1.0 }
    }
}

impl CauchyLoss {
    #[inline]
    pub fn rho(&self, z: f64) -> f64 {
        self.scale * libm::log1p(z / self.scale)
    }

    #[inline]
    pub fn derivative(&self, z: f64) -> f64 {
        1.0 / (1.0 + z / self.scale)
    }
}

/// `ln(1 + z)` for `z >= 0`.
pub fn cauchy_loss(z: f64) -> Result<f64, EstimatorError> {
    if !(z >= 0.0) {
        return Err(EstimatorError::Domain(z));
    }
    Ok(CauchyLoss::default().rho(z))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchEstimate {
    /// Relative pitch from frame `t` to `t+1`.
    pub phi_rel: f64,
    /// Cumulative pitch of frame `t+1` relative to the sequence start.
    pub phi_cum: f64,
    pub objective: f64,
    pub iterations: usize,
    pub n_pairs_used: usize,
    pub n_pairs_dropped: usize,
    pub converged: bool,
    /// Set when the frame had too few correspondences and the previous angle was reused.
    pub held: bool,
}

/// Per-pair pitch estimates of a sequence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PitchTrack {
    pub estimates: Vec<PitchEstimate>,
}

impl PitchTrack {
    /// Number of frames covered: one more than the number of frame pairs.
    pub fn frame_count(&self) -> usize {
        self.estimates.len() + 1
    }

    /// Cumulative pitch per frame; frame 0 is the reference and has angle 0.
    pub fn cumulative(&self) -> Vec<f64> {
        core::iter::once(0.0)
            .chain(self.estimates.iter().map(|e| e.phi_cum))
            .collect()
    }

    /// Relative pitch arriving at each frame (`frame-1 -> frame`); 0 for frame 0.
    pub fn relative(&self) -> Vec<f64> {
        core::iter::once(0.0)
            .chain(self.estimates.iter().map(|e| e.phi_rel))
            .collect()
    }

    pub fn held_frames(&self) -> usize {
        self.estimates.iter().filter(|e| e.held).count()
    }
}

/// The robust objective over a fixed set of usable pairs.
#[derive(Debug, Clone)]
pub struct PitchObjective {
    model: PitchFundamental,
    loss: CauchyLoss,
    pairs: Vec<(Vector3<f64>, Vector3<f64>)>,
    dropped: usize,
}

/// Objective value with first derivative and the Gauss-Newton curvature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveEval {
    pub value: f64,
    pub gradient: f64,
    pub curvature: f64,
}

impl PitchObjective {
    /// Keeps static, finite pairs that are not at the epipole for angle `phi`.
    pub fn new(
        pairs: &[PointPair],
        intr: &CameraIntrinsics,
        t: &TranslationDirection,
        phi: f64,
        cfg: &EstimatorConfig,
    ) -> Result<Self, EstimatorError> {
        let model = PitchFundamental::new(intr, t);
        let f = model.at(phi);
        let mut kept = Vec::with_capacity(pairs.len());
        for pair in pairs.iter().filter(|p| p.is_static && p.is_finite()) {
            let (a, b) = (lift(&pair.p0), lift(&pair.p1));
            if sampson_terms(&a, &b, &f).denominator >= DEGENERATE_DENOMINATOR {
                kept.push((a, b));
            }
        }
        if kept.len() < cfg.min_pairs {
            return Err(EstimatorError::InsufficientCorrespondences {
                usable: kept.len(),
                required: cfg.min_pairs,
            });
        }
        Ok(Self {
            model,
            loss: CauchyLoss { scale: cfg.loss_scale },
            dropped: pairs.len() - kept.len(),
            pairs: kept,
        })
    }

    pub fn used(&self) -> usize {
        self.pairs.len()
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn value(&self, phi: f64) -> f64 {
        let f = self.model.at(phi);
        let mut sum = 0.0;
        for (p0, p1) in &self.pairs {
            let terms = sampson_terms(p0, p1, &f);
            if terms.denominator >= DEGENERATE_DENOMINATOR {
                sum += self.loss.rho(terms.algebraic * terms.algebraic / terms.denominator);
            }
        }
        sum
    }

    /// Value, analytic derivative and IRLS-weighted Gauss-Newton curvature at `phi`.
    pub fn evaluate(&self, phi: f64) -> ObjectiveEval {
        let f = self.model.at(phi);
        let df = self.model.derivative_at(phi);
        let mut out = ObjectiveEval {
            value: 0.0,
            gradient: 0.0,
            curvature: 0.0,
        };
        for (p0, p1) in &self.pairs {
            let fp0 = f * p0;
            let ftp1 = f.tr_mul(p1);
            let dfp0 = df * p0;
            let dftp1 = df.tr_mul(p1);
            let e = p1.dot(&fp0);
            let de = p1.dot(&dfp0);
            let d = fp0.x * fp0.x + fp0.y * fp0.y + ftp1.x * ftp1.x + ftp1.y * ftp1.y;
            if d < DEGENERATE_DENOMINATOR {
                continue;
            }
            let dd = 2.0 * (fp0.x * dfp0.x + fp0.y * dfp0.y + ftp1.x * dftp1.x + ftp1.y * dftp1.y);
            let s = e * e / d;
            let ds = (2.0 * e * de * d - e * e * dd) / (d * d);
            // residual r = e / sqrt(D), S = r^2
            let sqrt_d = libm::sqrt(d);
            let dr = de / sqrt_d - e * dd / (2.0 * d * sqrt_d);
            let w = self.loss.derivative(s);
            out.value += self.loss.rho(s);
            out.gradient += w * ds;
            out.curvature += 2.0 * w * dr * dr;
        }
        out
    }
}

pub fn robust_objective(
    pairs: &[PointPair],
    intr: &CameraIntrinsics,
    t: &TranslationDirection,
    phi: f64,
    cfg: &EstimatorConfig,
) -> Result<f64, EstimatorError> {
    Ok(PitchObjective::new(pairs, intr, t, phi, cfg)?.value(phi))
}

/// Minimizes the robust objective starting at `warm_start`.
///
/// `phi_cum` of the result equals `phi_rel`; [`estimate_pitch_track`] accumulates it.
pub fn estimate_pitch(
    pairs: &[PointPair],
    intr: &CameraIntrinsics,
    t: &TranslationDirection,
    warm_start: f64,
    cfg: &EstimatorConfig,
) -> Result<PitchEstimate, EstimatorError> {
    estimate_pitch_with_history(pairs, intr, t, warm_start, cfg).map(|(e, _)| e)
}

/// Same as [`estimate_pitch`], also returning the objective after every accepted step
/// (the first entry is the objective at the start point).
pub fn estimate_pitch_with_history(
    pairs: &[PointPair],
    intr: &CameraIntrinsics,
    t: &TranslationDirection,
    warm_start: f64,
    cfg: &EstimatorConfig,
) -> Result<(PitchEstimate, Vec<f64>), EstimatorError> {
    cfg.validate()?;
    let clamp = |x: f64| x.clamp(-cfg.phi_clamp, cfg.phi_clamp);
    let mut phi = clamp(if warm_start.is_finite() { warm_start } else { 0.0 });
    let objective = PitchObjective::new(pairs, intr, t, phi, cfg)?;

    let mut current = objective.evaluate(phi);
    let mut history = alloc::vec![current.value];
    let mut damping = cfg.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        if libm::fabs(current.gradient) <= cfg.gradient_tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        let scale = if current.curvature > 0.0 {
            current.curvature
        } else {
            1.0
        };
        let step = -current.gradient / (current.curvature + damping * scale);
        let candidate = clamp(phi + step);
        let taken = candidate - phi;
        if libm::fabs(taken) <= cfg.step_tolerance {
            converged = true;
            break;
        }

        let value = objective.value(candidate);
        if value <= current.value {
            phi = candidate;
            current = objective.evaluate(phi);
            history.push(current.value);
            damping = (damping * cfg.damping_down).max(1e-15);
        } else {
            damping *= cfg.damping_up;
            if damping > 1e15 {
                // No descent along the gradient at this precision.
                converged = true;
                break;
            }
        }
    }

    let estimate = PitchEstimate {
        phi_rel: phi,
        phi_cum: phi,
        objective: current.value,
        iterations,
        n_pairs_used: objective.used(),
        n_pairs_dropped: objective.dropped(),
        converged,
        held: false,
    };
    Ok((estimate, history))
}

/// Estimates a whole sequence, warm-starting each frame pair from the previous one.
///
/// Frame pairs with too few usable correspondences reuse the previous relative
/// angle (0 for the first pair) and are flagged `held`.
pub fn estimate_pitch_track(
    frame_pairs: &[CorrespondenceSet],
    intr: &CameraIntrinsics,
    t: &TranslationDirection,
    cfg: &EstimatorConfig,
) -> Result<PitchTrack, EstimatorError> {
    cfg.validate()?;
    let mut estimates = Vec::with_capacity(frame_pairs.len());
    let mut prev_rel = 0.0;
    let mut prev_cum = 0.0;
    for pairs in frame_pairs {
        let mut est = match estimate_pitch(pairs, intr, t, prev_rel, cfg) {
            Ok(est) => est,
            Err(EstimatorError::InsufficientCorrespondences { usable, .. }) => PitchEstimate {
                phi_rel: prev_rel,
                phi_cum: 0.0,
                objective: 0.0,
                iterations: 0,
                n_pairs_used: usable,
                n_pairs_dropped: pairs.len() - usable,
                converged: false,
                held: true,
            },
            Err(e) => return Err(e),
        };
        est.phi_cum = cfg.cumulative_decay * prev_cum + est.phi_rel;
        prev_rel = est.phi_rel;
        prev_cum = est.phi_cum;
        estimates.push(est);
    }
    Ok(PitchTrack { estimates })
}
