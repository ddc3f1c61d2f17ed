//! Response strength versus vehicle distance: `s(d) = alpha * f * delta / d + beta`.

use alloc::vec::Vec;

use super::{generate_sequence, BumpKind, BumpProfile, SceneConfig, SynthError, VehicleConfig};
use crate::geometry::{CameraIntrinsics, TranslationDirection};
use crate::signal::{run_pipeline, PipelineConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalModelFit {
    pub alpha: f64,
    pub beta: f64,
    /// RMS of the fit residuals.
    pub residual: f64,
    pub r_squared: f64,
}

pub fn predict_response(d: f64, delta: f64, f: f64, alpha: f64, beta: f64) -> Result<f64, SynthError> {
    if !(d > 0.0) {
        return Err(SynthError::Domain("distance must be positive"));
    }
    Ok(alpha * f * delta / d + beta)
}

/// Ordinary least squares on the basis `[f * delta / d, 1]`.
pub fn fit_signal_model(samples: &[(f64, f64)], f: f64, delta: f64) -> Result<SignalModelFit, SynthError> {
    if samples.iter().any(|(d, _)| !(*d > 0.0)) {
        return Err(SynthError::Domain("distance must be positive"));
    }
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|(d, _)| f * delta / d).collect();
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_s = samples.iter().map(|(_, s)| s).sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x) * (x - mean_x)).sum();
    if samples.len() < 2 || !(sxx > 0.0) {
        return Err(SynthError::DegenerateFit);
    }
    let sxs: f64 = xs
        .iter()
        .zip(samples)
        .map(|(x, (_, s))| (x - mean_x) * (s - mean_s))
        .sum();
    let alpha = sxs / sxx;
    let beta = mean_s - alpha * mean_x;
    let ss_res: f64 = xs
        .iter()
        .zip(samples)
        .map(|(x, (_, s))| {
            let r = s - (alpha * x + beta);
            r * r
        })
        .sum();
    let ss_tot: f64 = samples.iter().map(|(_, s)| (s - mean_s) * (s - mean_s)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(SignalModelFit {
        alpha,
        beta,
        residual: libm::sqrt(ss_res / n),
        r_squared,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceResponse {
    pub distance: f64,
    /// Largest response within `T/2` frames of the bump apex.
    pub s_apex: f64,
    /// Median response outside the frames the bump can influence.
    pub s_background: f64,
}

/// Runs the full pipeline on one bump traversal per distance.
///
/// Each run uses seed `scene.seed + index`; the bump sits mid-sequence with the
/// speed-bump crossing duration.
#[allow(clippy::too_many_arguments)]
pub fn response_vs_distance_experiment(
    distances: &[f64],
    delta: f64,
    scene: &SceneConfig,
    vehicle: &VehicleConfig,
    intr: &CameraIntrinsics,
    t: &TranslationDirection,
    pipeline: &PipelineConfig,
) -> Result<Vec<DistanceResponse>, SynthError> {
    let apex = scene.duration / 2;
    let bump = BumpProfile::new(BumpKind::VehicleDisplacement, apex, scene.bump_duration(), delta);
    let half = pipeline.window / 2;
    let mut out = Vec::with_capacity(distances.len());
    for (i, d) in distances.iter().enumerate() {
        if !(*d > 1.0) {
            return Err(SynthError::Config("distances must exceed 1 m"));
        }
        let scene_i = SceneConfig {
            seed: scene.seed.wrapping_add(i as u64),
            ..*scene
        };
        let vehicle_i = VehicleConfig {
            distance: super::VehicleDistance::Constant(*d),
            ..vehicle.clone()
        };
        let seq = generate_sequence(&scene_i, &[bump], &vehicle_i, intr, t)?;
        let run = run_pipeline(&seq.track, &seq.correspondences, intr, t, pipeline)?;
        let s = &run.response.s;

        let lo = apex.saturating_sub(half);
        let hi = (apex + half).min(s.len() - 1);
        let s_apex = s[lo..=hi].iter().flatten().cloned().fold(0.0, f64::max);

        let influence_start = libm::floor(bump.start()).max(0.0) as usize;
        let influence_end = libm::ceil(bump.end()) as usize + pipeline.window;
        let mut background: Vec<f64> = s
            .iter()
            .enumerate()
            .filter(|(k, _)| *k < influence_start || *k >= influence_end)
            .filter_map(|(_, v)| *v)
            .collect();
        out.push(DistanceResponse {
            distance: *d,
            s_apex,
            s_background: median(&mut background),
        });
    }
    Ok(out)
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn prediction_examples() {
        assert_relative_eq!(
            predict_response(10.0, 0.06, 1066.0, 1.0, 0.0).unwrap(),
            6.396,
            epsilon = 1e-12
        );
        assert_eq!(predict_response(3.0, 0.0, 1066.0, 1.0, 0.7).unwrap(), 0.7);
        let near = predict_response(5.0, 0.06, 1066.0, 1.0, 0.0).unwrap();
        let far = predict_response(10.0, 0.06, 1066.0, 1.0, 0.0).unwrap();
        assert_relative_eq!(near, 2.0 * far, epsilon = 1e-12);
        assert!(predict_response(0.0, 0.06, 1066.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn fit_recovers_exact_model() {
        let samples: Vec<(f64, f64)> = [5.0, 8.0, 12.0, 25.0]
            .iter()
            .map(|d| (*d, predict_response(*d, 0.06, 1066.0, 1.0, 2.0).unwrap()))
            .collect();
        let fit = fit_signal_model(&samples, 1066.0, 0.06).unwrap();
        assert_relative_eq!(fit.alpha, 1.0, epsilon = 1e-12);
        assert_relative_eq!(fit.beta, 2.0, epsilon = 1e-12);
        assert!(fit.residual < 1e-9);
        assert_relative_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_point_solve() {
        let fit = fit_signal_model(&[(10.0, 6.396 + 2.0), (20.0, 3.198 + 2.0)], 1066.0, 0.06).unwrap();
        assert_relative_eq!(fit.alpha, 1.0, epsilon = 1e-12);
        assert_relative_eq!(fit.beta, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_fit() {
        assert_eq!(
            fit_signal_model(&[(10.0, 1.0), (10.0, 2.0)], 1066.0, 0.06),
            Err(SynthError::DegenerateFit)
        );
        assert_eq!(
            fit_signal_model(&[(10.0, 1.0)], 1066.0, 0.06),
            Err(SynthError::DegenerateFit)
        );
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&mut []), 0.0);
    }
}
