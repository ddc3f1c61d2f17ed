//! The four subcommands, as library functions writing into an output directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use roadsense_core::eval::{
    cv_threshold_metrics, fpr_vs_rotation_intensity, score_events, IntensitySeries, Label, LabeledEvent, MetricsReport,
    RotationIntensityBin,
};
use roadsense_core::signal::{run_pipeline, DetectionEvent, PipelineConfig};
use roadsense_core::synth::{fit_signal_model, SequenceSpec, SignalModelFit};
use serde::Serialize;

use crate::config::{EvalConfig, SynthConfig};
use crate::error::{CliError, Result};
use crate::format::{self, Calibration};

pub const CALIBRATION_FILE: &str = "calibration.txt";
pub const LABELS_FILE: &str = "labels.csv";
pub const CORRESPONDENCES_FILE: &str = "correspondences.csv";
pub const TRACK_FILE: &str = "track.csv";
pub const PITCH_TRUE_FILE: &str = "pitch_true.csv";
pub const RESPONSE_FILE: &str = "response.csv";
pub const DETECTIONS_FILE: &str = "detections.csv";

fn sub_seed(base: u64, index: usize) -> u64 {
    base.wrapping_mul(0xD134_2543_DE82_EF95).wrapping_add(index as u64 + 1)
}

/// Expands the suite and explicit entries into sequence specs, checking ids.
pub fn synth_sequences(cfg: &SynthConfig, seed: u64) -> Result<Vec<SequenceSpec>> {
    let mut specs = match &cfg.suite {
        Some(kind) => kind.build(seed, &cfg.scene),
        None => Vec::new(),
    };
    for (i, entry) in cfg.sequence.iter().enumerate() {
        specs.push(SequenceSpec {
            id: entry.id.clone(),
            seed: entry.seed.unwrap_or_else(|| sub_seed(seed, i)),
            distance: entry.distance,
            bumps: entry.bump.clone(),
            background_frames: entry.background_frames.clone(),
        });
    }
    if cfg.suite.is_none() && cfg.sequence.is_empty() {
        specs.push(SequenceSpec {
            id: "seq_000".into(),
            seed,
            distance: None,
            bumps: Vec::new(),
            background_frames: Vec::new(),
        });
    }
    let mut seen = BTreeSet::new();
    for s in &specs {
        let valid = !s.id.is_empty() && s.id.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c));
        if !valid || s.id.starts_with('.') {
            return Err(CliError::config(
                "[[sequence]]",
                format!("sequence id `{}` is not a plain file name", s.id),
            ));
        }
        if !seen.insert(s.id.clone()) {
            return Err(CliError::config(
                "[[sequence]]",
                format!("duplicate sequence id `{}`", s.id),
            ));
        }
    }
    Ok(specs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub id: String,
    pub frames: usize,
    pub anomalies: usize,
}

/// Materializes a synthetic dataset under `out`.
pub fn synth(cfg: &SynthConfig, seed_override: Option<u64>, out: &Path) -> Result<Vec<SynthSummary>> {
    let seed = seed_override.or(cfg.seed).unwrap_or(cfg.scene.seed);
    cfg.scene.validate().map_err(|e| CliError::config("[scene]", e))?;
    let cal = cfg.camera.calibration(cfg.scene.fps)?;
    let specs = synth_sequences(cfg, seed)?;

    let mut labels: Vec<LabeledEvent> = Vec::new();
    let mut summary = Vec::with_capacity(specs.len());
    for spec in &specs {
        let seq = spec
            .generate(&cfg.scene, &cfg.vehicle, &cal.intrinsics, &cal.translation)
            .map_err(|e| CliError::config(format!("sequence `{}`", spec.id), e))?;
        let dir = out.join(&spec.id);
        format::write_file(
            &dir.join(CORRESPONDENCES_FILE),
            &format::correspondences_to_string(&seq.correspondences),
        )?;
        format::write_file(&dir.join(TRACK_FILE), &format::track_to_string(&seq.track))?;
        format::write_file(&dir.join(PITCH_TRUE_FILE), &format::pitch_truth_to_string(&seq.truth))?;
        let seq_labels = spec.labels();
        summary.push(SynthSummary {
            id: spec.id.clone(),
            frames: seq.track.len(),
            anomalies: seq_labels.iter().filter(|l| l.label == Label::Anomaly).count(),
        });
        labels.extend(seq_labels);
    }
    labels.sort();
    format::write_file(&out.join(LABELS_FILE), &format::labels_to_string(&labels))?;
    format::write_file(&out.join(CALIBRATION_FILE), &format::calibration_to_string(&cal))?;
    Ok(summary)
}

/// Subdirectories of `dir` containing `marker`, sorted by name.
pub fn sequence_dirs(dir: &Path, marker: &str) -> Result<Vec<(String, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let path = entry.path();
        if path.join(marker).is_file() {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                out.push((name.to_string(), path));
            }
        }
    }
    out.sort();
    if out.is_empty() {
        let err = std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no sequence directories containing {marker}"),
        );
        return Err(CliError::io(dir, err));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectSummary {
    pub id: String,
    pub detections: Vec<DetectionEvent>,
    /// Non-fatal per-sequence notes (held or interpolated frames).
    pub warnings: Vec<String>,
}

/// Runs the pipeline on every sequence of `dataset`.
pub fn detect(
    dataset: &Path,
    calibration: Option<&Path>,
    cfg: &PipelineConfig,
    out: &Path,
) -> Result<Vec<DetectSummary>> {
    let cal_path = calibration
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dataset.join(CALIBRATION_FILE));
    let cal: Calibration = format::read_calibration(&cal_path)?;
    let mut summary = Vec::new();
    for (id, dir) in sequence_dirs(dataset, TRACK_FILE)? {
        let track = format::read_track(&dir.join(TRACK_FILE), cal.fps)?;
        let pairs = format::read_correspondences(&dir.join(CORRESPONDENCES_FILE))?;
        let output = run_pipeline(&track, &pairs, &cal.intrinsics, &cal.translation, cfg).map_err(|e| {
            match CliError::from(e) {
                CliError::Alignment(msg) => CliError::Alignment(format!("sequence `{id}`: {msg}")),
                other => other,
            }
        })?;
        let mut warnings = Vec::new();
        let held = output.pitch.held_frames();
        if held > 0 {
            warnings.push(format!("{held} frame pair(s) held the previous pitch"));
        }
        let interpolated = output.response.interpolated.iter().filter(|b| **b).count();
        if interpolated > 0 {
            warnings.push(format!(
                "{interpolated} frame(s) without valid track points were interpolated"
            ));
        }
        let seq_out = out.join(&id);
        format::write_file(&seq_out.join(RESPONSE_FILE), &format::response_to_string(&output))?;
        format::write_file(
            &seq_out.join(DETECTIONS_FILE),
            &format::detections_to_string(&output.detections),
        )?;
        summary.push(DetectSummary {
            id,
            detections: output.detections,
            warnings,
        });
    }
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
struct MetricsDocument {
    run: String,
    events: usize,
    positives: usize,
    negatives: usize,
    auc: f64,
    balanced_accuracy_mean: f64,
    balanced_accuracy_std: f64,
    f_score_mean: f64,
    f_score_std: f64,
    k_folds: usize,
    seed: u64,
    stratified: bool,
    scoring_window: usize,
    fpr_threshold: f64,
    fold: Vec<FoldDocument>,
}

#[derive(Debug, Clone, Serialize)]
struct FoldDocument {
    threshold: f64,
    balanced_accuracy: f64,
    f_score: f64,
}

#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub name: String,
    pub report: MetricsReport,
    pub fpr_threshold: f64,
    pub fpr_bins: Vec<RotationIntensityBin>,
}

/// Scores labelled events on each run, writing `<out>/<name>/{metrics.toml,roc.csv,fpr_intensity.csv,scores.csv}`.
pub fn eval(labels_path: &Path, runs: &[(String, PathBuf)], cfg: &EvalConfig, out: &Path) -> Result<Vec<RunMetrics>> {
    cfg.validate()?;
    if runs.is_empty() {
        return Err(CliError::config("eval", "at least one run is required"));
    }
    let labels = format::read_labels(labels_path)?;
    let anomalous: BTreeSet<&str> = labels
        .iter()
        .filter(|l| l.label == Label::Anomaly)
        .map(|l| l.sequence.as_str())
        .collect();
    let mut results = Vec::new();
    for (name, dir) in runs {
        let mut responses = BTreeMap::new();
        let mut pitch = BTreeMap::new();
        for (id, seq_dir) in sequence_dirs(dir, RESPONSE_FILE)? {
            let table = format::read_response(&seq_dir.join(RESPONSE_FILE))?;
            responses.insert(id.clone(), table.s);
            pitch.insert(id, table.phi_cum);
        }
        let scored = score_events(&labels, &responses, cfg.window)?;
        let report = cv_threshold_metrics(&scored, cfg.k_folds, cfg.seed)?;
        let fpr_threshold = cfg
            .fpr_threshold
            .unwrap_or_else(|| report.folds.iter().map(|f| f.threshold).sum::<f64>() / report.folds.len() as f64);
        let negatives: Vec<IntensitySeries<'_>> = responses
            .iter()
            .filter(|(id, _)| !anomalous.contains(id.as_str()))
            .map(|(id, s)| IntensitySeries { s, phi_cum: &pitch[id] })
            .collect();
        let fpr_bins = fpr_vs_rotation_intensity(&negatives, cfg.intensity_window, fpr_threshold, &cfg.intensity_bins)?;

        let run_out = out.join(name);
        let positives = scored.iter().filter(|s| s.label.is_positive()).count();
        let doc = MetricsDocument {
            run: name.clone(),
            events: scored.len(),
            positives,
            negatives: scored.len() - positives,
            auc: report.auc,
            balanced_accuracy_mean: report.balanced_accuracy.mean,
            balanced_accuracy_std: report.balanced_accuracy.std,
            f_score_mean: report.f_score.mean,
            f_score_std: report.f_score.std,
            k_folds: report.k_folds,
            seed: report.seed,
            stratified: report.stratified,
            scoring_window: cfg.window,
            fpr_threshold,
            fold: report
                .folds
                .iter()
                .map(|f| FoldDocument {
                    threshold: f.threshold,
                    balanced_accuracy: f.balanced_accuracy,
                    f_score: f.f_score,
                })
                .collect(),
        };
        let toml = toml::to_string(&doc).map_err(|e| CliError::Other(e.to_string()))?;
        format::write_file(
            &run_out.join("metrics.toml"),
            &format!("# roadsense metrics v{}\n{toml}", format::VERSION),
        )?;
        format::write_file(&run_out.join("roc.csv"), &format::roc_to_string(&report.roc))?;
        format::write_file(
            &run_out.join("fpr_intensity.csv"),
            &format::fpr_intensity_to_string(&fpr_bins),
        )?;
        let rows: Vec<(LabeledEvent, f64)> = labels.iter().cloned().zip(scored.iter().map(|s| s.score)).collect();
        format::write_file(&run_out.join("scores.csv"), &format::scores_to_string(&rows))?;
        results.push(RunMetrics {
            name: name.clone(),
            report,
            fpr_threshold,
            fpr_bins,
        });
    }
    Ok(results)
}

#[derive(Debug, Clone, Serialize)]
struct FitDocument {
    focal: f64,
    delta: f64,
    samples: usize,
    alpha: f64,
    beta: f64,
    residual: f64,
    r_squared: f64,
}

/// Least-squares fit of the response-distance law; returns the fit and its TOML form.
pub fn fit_model(input: &Path, focal: f64, delta: f64) -> Result<(SignalModelFit, String)> {
    if !(focal.is_finite() && focal > 0.0 && delta.is_finite() && delta > 0.0) {
        return Err(CliError::config("fit-model", "focal and delta must be positive"));
    }
    let samples = format::read_distance_table(input)?;
    if samples
        .iter()
        .any(|(d, s)| !(d.is_finite() && *d > 0.0 && s.is_finite()))
    {
        return Err(CliError::format(
            input,
            0,
            "distances must be positive and responses finite",
        ));
    }
    let fit = fit_signal_model(&samples, focal, delta)?;
    let doc = FitDocument {
        focal,
        delta,
        samples: samples.len(),
        alpha: fit.alpha,
        beta: fit.beta,
        residual: fit.residual,
        r_squared: fit.r_squared,
    };
    let text = toml::to_string(&doc).map_err(|e| CliError::Other(e.to_string()))?;
    Ok((fit, format!("# roadsense model_fit v{}\n{text}", format::VERSION)))
}
