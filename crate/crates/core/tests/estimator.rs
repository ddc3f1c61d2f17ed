use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roadsense_core::geometry::{CameraIntrinsics, PointPair, TranslationDirection};
use roadsense_core::pitch::{estimate_pitch, estimate_pitch_track, robust_objective, EstimatorConfig, PitchObjective};
use roadsense_core::synth::{generate_sequence, synthesize_pairs, BumpKind, BumpProfile, SceneConfig, VehicleConfig};

fn camera() -> CameraIntrinsics {
    CameraIntrinsics::full_hd(1066.0).unwrap()
}

fn instance(seed: u64, phi: f64, sigma: f64, outliers: f64) -> Vec<PointPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synthesize_pairs(
        &mut rng,
        200,
        (5.0, 50.0),
        &camera(),
        &TranslationDirection::forward(),
        0.18,
        phi,
        sigma,
        outliers,
        true,
    )
}

/// Argmin of the objective over a uniform grid on [-0.3, 0.3].
fn grid_argmin(pairs: &[PointPair], step: f64) -> f64 {
    let obj = PitchObjective::new(
        pairs,
        &camera(),
        &TranslationDirection::forward(),
        0.0,
        &EstimatorConfig::default(),
    )
    .unwrap();
    let n = (0.6 / step).round() as i64;
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=n {
        let phi = -0.3 + i as f64 * step;
        let v = obj.value(phi);
        if v < best.0 {
            best = (v, phi);
        }
    }
    best.1
}

#[test]
fn exact_recovery() {
    let pairs = instance(1, 0.02, 0.0, 0.0);
    let est = estimate_pitch(
        &pairs,
        &camera(),
        &TranslationDirection::forward(),
        0.0,
        &EstimatorConfig::default(),
    )
    .unwrap();
    assert!((est.phi_rel - 0.02).abs() < 1e-6);
    assert!(est.converged);
}

#[test]
fn noisy_recovery_with_outliers() {
    let mut errors: Vec<f64> = (0..20)
        .map(|seed| {
            let pairs = instance(100 + seed, 0.02, 0.5, 0.2);
            let est = estimate_pitch(
                &pairs,
                &camera(),
                &TranslationDirection::forward(),
                0.0,
                &EstimatorConfig::default(),
            )
            .unwrap();
            (est.phi_rel - 0.02).abs()
        })
        .collect();
    errors.sort_by(f64::total_cmp);
    assert!(errors.iter().all(|e| *e < 1e-3), "{errors:?}");
}

#[test]
fn matches_grid_search_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for k in 0..10 {
        let phi = rng.random_range(-0.05..0.05);
        let sigma = rng.random_range(0.0..1.0);
        let outliers = rng.random_range(0.0..0.3);
        let pairs = instance(500 + k, phi, sigma, outliers);
        let est = estimate_pitch(
            &pairs,
            &camera(),
            &TranslationDirection::forward(),
            0.0,
            &EstimatorConfig::default(),
        )
        .unwrap();
        let grid = grid_argmin(&pairs, 1e-5);
        assert!(
            (est.phi_rel - grid).abs() <= 2e-5,
            "instance {k}: lm {} grid {grid}",
            est.phi_rel
        );
        // LM lands at least as low as the grid point.
        let j_lm = robust_objective(
            &pairs,
            &camera(),
            &TranslationDirection::forward(),
            est.phi_rel,
            &EstimatorConfig::default(),
        )
        .unwrap();
        let j_grid = robust_objective(
            &pairs,
            &camera(),
            &TranslationDirection::forward(),
            grid,
            &EstimatorConfig::default(),
        )
        .unwrap();
        assert!(j_lm <= j_grid + 1e-9);
    }
}

#[test]
fn outliers_barely_move_the_estimate() {
    let clean = instance(77, 0.02, 0.0, 0.0);
    let base = estimate_pitch(
        &clean,
        &camera(),
        &TranslationDirection::forward(),
        0.0,
        &EstimatorConfig::default(),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    let mut contaminated = clean.clone();
    for _ in 0..60 {
        let p0 = nalgebra::Point2::new(rng.random_range(0.0..1920.0), rng.random_range(0.0..1080.0));
        let p1 = p0 + nalgebra::Vector2::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
        contaminated.push(PointPair::new(p0, p1));
    }
    let est = estimate_pitch(
        &contaminated,
        &camera(),
        &TranslationDirection::forward(),
        0.0,
        &EstimatorConfig::default(),
    )
    .unwrap();
    assert!((est.phi_rel - base.phi_rel).abs() < 5e-3);
}

#[test]
fn track_follows_pitch_pulse() {
    let scene = SceneConfig {
        noise_sigma: 0.5,
        outlier_fraction: 0.0,
        duration: 60,
        seed: 3,
        ..SceneConfig::default()
    };
    let pulse = BumpProfile::new(BumpKind::EgoPitch, 25, 15.0, 0.03);
    let intr = camera();
    let t = TranslationDirection::forward();
    let seq = generate_sequence(&scene, &[pulse], &VehicleConfig::default(), &intr, &t).unwrap();
    let track = estimate_pitch_track(&seq.correspondences, &intr, &t, &EstimatorConfig::default()).unwrap();
    let truth = seq.truth.relative_to_start();
    let est = track.cumulative();
    let worst = est.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 2e-3, "max cumulative error {worst}");
}

#[test]
fn sparse_frame_is_held() {
    let scene = SceneConfig {
        duration: 10,
        ..SceneConfig::noise_free()
    };
    let pulse = BumpProfile::new(BumpKind::EgoPitch, 5, 8.0, 0.02);
    let intr = camera();
    let t = TranslationDirection::forward();
    let mut seq = generate_sequence(&scene, &[pulse], &VehicleConfig::default(), &intr, &t).unwrap();
    seq.correspondences[5].truncate(2);
    let track = estimate_pitch_track(&seq.correspondences, &intr, &t, &EstimatorConfig::default()).unwrap();
    assert!(track.estimates[5].held);
    assert_eq!(track.estimates[5].phi_rel, track.estimates[4].phi_rel);
    assert!(!track.estimates[4].held);
}
