//! Seeded sequence collections used by the evaluation protocols.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    generate_sequence, BumpKind, BumpProfile, SceneConfig, SynthError, SyntheticSequence, VehicleConfig,
    VehicleDistance,
};
use crate::eval::{Label, LabeledEvent};
use crate::geometry::{CameraIntrinsics, TranslationDirection};

/// One sequence of a suite: its excitation and the labels it contributes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SequenceSpec {
    pub id: String,
    pub seed: u64,
    /// Overrides the vehicle distance when set.
    #[cfg_attr(feature = "serde", serde(default))]
    pub distance: Option<f64>,
    #[cfg_attr(feature = "serde", serde(default, rename = "bump"))]
    pub bumps: Vec<BumpProfile>,
    /// Frames labelled as background events.
    #[cfg_attr(feature = "serde", serde(default))]
    pub background_frames: Vec<usize>,
}

impl SequenceSpec {
    /// One anomaly label per vehicle pulse plus the background frames, sorted by frame.
    pub fn labels(&self) -> Vec<LabeledEvent> {
        let mut out: Vec<LabeledEvent> = self
            .bumps
            .iter()
            .filter(|b| b.kind == BumpKind::VehicleDisplacement && b.amplitude > 0.0)
            .map(|b| LabeledEvent {
                sequence: self.id.clone(),
                apex_frame: b.apex_frame,
                label: Label::Anomaly,
            })
            .chain(self.background_frames.iter().map(|f| LabeledEvent {
                sequence: self.id.clone(),
                apex_frame: *f,
                label: Label::Background,
            }))
            .collect();
        out.sort();
        out
    }

    pub fn generate(
        &self,
        scene: &SceneConfig,
        vehicle: &VehicleConfig,
        intr: &CameraIntrinsics,
        t: &TranslationDirection,
    ) -> Result<SyntheticSequence, SynthError> {
        let scene = SceneConfig {
            seed: self.seed,
            ..*scene
        };
        let vehicle = match self.distance {
            Some(d) => VehicleConfig {
                distance: VehicleDistance::Constant(d),
                ..vehicle.clone()
            },
            None => vehicle.clone(),
        };
        generate_sequence(&scene, &self.bumps, &vehicle, intr, t)
    }
}

/// Named collections of sequences.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum SuiteKind {
    /// One vehicle bump per distance, still ego camera.
    Distance { distances: Vec<f64>, delta: f64 },
    /// Anomaly and background events while the ego vehicle pitches over its own bumps.
    Hard { positives: usize, negatives: usize },
    /// Anomaly and background events with a still ego camera.
    Easy { positives: usize, negatives: usize },
    /// No vehicle anomalies; ego pitch pulses of increasing amplitude.
    EgoBumps { sequences: usize, max_amplitude: f64 },
    /// No excitation at all.
    Still { sequences: usize },
}

impl SuiteKind {
    pub fn build(&self, seed: u64, scene: &SceneConfig) -> Vec<SequenceSpec> {
        match self {
            SuiteKind::Distance { distances, delta } => distance_suite(distances, *delta, seed, scene),
            SuiteKind::Hard { positives, negatives } => event_suite(*positives, *negatives, true, seed, scene),
            SuiteKind::Easy { positives, negatives } => event_suite(*positives, *negatives, false, seed, scene),
            SuiteKind::EgoBumps {
                sequences,
                max_amplitude,
            } => ego_bump_suite(*sequences, *max_amplitude, seed, scene),
            SuiteKind::Still { sequences } => still_suite(*sequences, seed, scene),
        }
    }
}

fn sub_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64 + 1)
}

pub fn distance_suite(distances: &[f64], delta: f64, seed: u64, scene: &SceneConfig) -> Vec<SequenceSpec> {
    let apex = scene.duration / 2;
    distances
        .iter()
        .enumerate()
        .map(|(i, d)| SequenceSpec {
            id: format!("dist_{:03}_{:05.1}m", i, d),
            seed: sub_seed(seed, i),
            distance: Some(*d),
            bumps: alloc::vec![BumpProfile::new(
                BumpKind::VehicleDisplacement,
                apex,
                scene.bump_duration(),
                delta
            )],
            background_frames: Vec::new(),
        })
        .collect()
}

/// Positives carry a vehicle bump (distance 5-20 m, height 3-8 cm); negatives carry
/// only a background label. With `ego_bumps`, every sequence also pitches the ego
/// camera (0.005-0.03 rad) within a few frames of the event.
pub fn event_suite(
    positives: usize,
    negatives: usize,
    ego_bumps: bool,
    seed: u64,
    scene: &SceneConfig,
) -> Vec<SequenceSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centre = (scene.duration / 2) as i64;
    let spread = (scene.duration as i64 / 6).max(1);
    let prefix = if ego_bumps { "hard" } else { "easy" };
    (0..positives + negatives)
        .map(|i| {
            let positive = i < positives;
            let apex = (centre + rng.random_range(-spread..=spread)).clamp(0, scene.duration as i64 - 1) as usize;
            let distance = rng.random_range(5.0..20.0);
            let delta = rng.random_range(0.03..0.08);
            let ego_amp = rng.random_range(0.005..0.03);
            let ego_offset: i64 = rng.random_range(-6..=6);
            let mut bumps = Vec::new();
            if positive {
                bumps.push(BumpProfile::new(
                    BumpKind::VehicleDisplacement,
                    apex,
                    scene.bump_duration(),
                    delta,
                ));
            }
            if ego_bumps {
                let ego_apex = (apex as i64 + ego_offset).clamp(0, scene.duration as i64 - 1) as usize;
                bumps.push(BumpProfile::new(
                    BumpKind::EgoPitch,
                    ego_apex,
                    scene.bump_duration(),
                    ego_amp,
                ));
            }
            SequenceSpec {
                id: format!("{prefix}_{}_{:03}", if positive { "pos" } else { "neg" }, i),
                seed: sub_seed(seed, i),
                distance: Some(distance),
                bumps,
                background_frames: if positive { Vec::new() } else { alloc::vec![apex] },
            }
        })
        .collect()
}

/// Sequences with several ego pitch pulses and a flat-road preceding vehicle.
pub fn ego_bump_suite(sequences: usize, max_amplitude: f64, seed: u64, scene: &SceneConfig) -> Vec<SequenceSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps_per_seq = (scene.duration / 75).max(1);
    let spacing = scene.duration / bumps_per_seq;
    (0..sequences)
        .map(|i| {
            let bumps = (0..bumps_per_seq)
                .map(|b| {
                    let apex = b * spacing + spacing / 2;
                    let amp = rng.random_range(0.0..max_amplitude);
                    BumpProfile::new(BumpKind::EgoPitch, apex, scene.bump_duration(), amp)
                })
                .collect();
            SequenceSpec {
                id: format!("ego_{:03}", i),
                seed: sub_seed(seed, i),
                distance: Some(rng.random_range(5.0..25.0)),
                bumps,
                background_frames: Vec::new(),
            }
        })
        .collect()
}

pub fn still_suite(sequences: usize, seed: u64, scene: &SceneConfig) -> Vec<SequenceSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..sequences)
        .map(|i| SequenceSpec {
            id: format!("still_{:03}", i),
            seed: sub_seed(seed, i),
            distance: Some(rng.random_range(5.0..25.0)),
            bumps: Vec::new(),
            background_frames: alloc::vec![scene.duration / 2],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_suite_labels() {
        let scene = SceneConfig::default();
        let suite = event_suite(3, 2, true, 5, &scene);
        assert_eq!(suite.len(), 5);
        let labels: Vec<_> = suite.iter().flat_map(|s| s.labels()).collect();
        assert_eq!(labels.iter().filter(|l| l.label == Label::Anomaly).count(), 3);
        assert_eq!(labels.iter().filter(|l| l.label == Label::Background).count(), 2);
        assert!(suite
            .iter()
            .all(|s| s.bumps.iter().any(|b| b.kind == BumpKind::EgoPitch)));
        assert_eq!(suite, event_suite(3, 2, true, 5, &scene));
        let ids: Vec<_> = suite.iter().map(|s| s.id.clone()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), ids.len());
    }

    #[test]
    fn distance_suite_one_label_each() {
        let suite = distance_suite(&[5.0, 10.0, 15.0, 20.0, 30.0, 40.0], 0.06, 1, &SceneConfig::default());
        assert_eq!(suite.len(), 6);
        assert!(suite.iter().all(|s| s.labels().len() == 1));
    }

    #[test]
    fn easy_suite_has_no_ego_pitch() {
        let suite = SuiteKind::Easy {
            positives: 2,
            negatives: 2,
        }
        .build(1, &SceneConfig::default());
        assert!(suite
            .iter()
            .all(|s| s.bumps.iter().all(|b| b.kind != BumpKind::EgoPitch)));
    }
}
