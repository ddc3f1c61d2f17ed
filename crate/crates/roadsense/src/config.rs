//! TOML documents accepted by `--config`.

use std::path::{Path, PathBuf};

use roadsense_core::geometry::{CameraIntrinsics, TranslationDirection};
use roadsense_core::nalgebra::Vector3;
use roadsense_core::signal::PipelineConfig;
use roadsense_core::synth::{BumpProfile, SceneConfig, SuiteKind, VehicleConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::format::Calibration;

/// Reads a TOML document, or returns the default when no path is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::config(path.display().to_string(), e.message()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Direction of travel in camera coordinates.
    pub translation: [f64; 3],
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            fx: 1066.0,
            fy: 1066.0,
            cx: 960.0,
            cy: 540.0,
            width: 1920,
            height: 1080,
            translation: [0.0, 0.0, 1.0],
        }
    }
}

impl CameraConfig {
    pub fn calibration(&self, fps: f64) -> Result<Calibration> {
        let intrinsics = CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
            .map_err(|e| CliError::config("[camera]", e))?;
        let [x, y, z] = self.translation;
        let translation =
            TranslationDirection::new(Vector3::new(x, y, z)).map_err(|e| CliError::config("[camera]", e))?;
        Ok(Calibration {
            intrinsics,
            translation,
            fps,
        })
    }
}

/// One explicitly listed sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceEntry {
    pub id: String,
    /// Defaults to a seed derived from the base seed and the entry index.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub distance: Option<f64>,
    #[serde(default)]
    pub bump: Vec<BumpProfile>,
    #[serde(default)]
    pub background_frames: Vec<usize>,
}

/// Input of `roadsense synth`. With neither `suite` nor `sequence`, a single flat-road
/// sequence named `seq_000` is generated.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Base seed; falls back to `scene.seed`.
    pub seed: Option<u64>,
    pub camera: CameraConfig,
    pub scene: SceneConfig,
    pub vehicle: VehicleConfig,
    pub suite: Option<SuiteKind>,
    pub sequence: Vec<SequenceEntry>,
}

/// Input of `roadsense detect`. Relative paths resolve against the working directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    /// Defaults to `<dataset>/calibration.txt`.
    pub calibration: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub pipeline: PipelineConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.pipeline;
        if p.window < 2 {
            return Err(CliError::config("[pipeline]", "window must be at least 2"));
        }
        if !p.threshold.is_finite() {
            return Err(CliError::config("[pipeline]", "threshold must be finite"));
        }
        p.estimator
            .validate()
            .map_err(|e| CliError::config("[pipeline.estimator]", e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunEntry {
    pub name: String,
    pub path: PathBuf,
}

/// Input of `roadsense eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub labels: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub run: Vec<RunEntry>,
    pub k_folds: usize,
    pub seed: u64,
    /// Scoring window; events take the maximum response within half of it.
    pub window: usize,
    /// Trailing window of the rotation intensity, normally one second of frames.
    pub intensity_window: usize,
    /// Threshold for the FPR table; defaults to the mean of the fold thresholds.
    pub fpr_threshold: Option<f64>,
    /// Rotation-intensity bin edges in radians.
    pub intensity_bins: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            labels: None,
            output: None,
            run: Vec::new(),
            k_folds: 5,
            seed: 0,
            window: 30,
            intensity_window: 30,
            fpr_threshold: None,
            intensity_bins: vec![0.0, 0.0025, 0.005, 0.01, 0.02, 0.04, 0.08, 0.3],
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_folds < 2 {
            return Err(CliError::config("eval", "k_folds must be at least 2"));
        }
        if self.window < 2 || self.intensity_window < 1 {
            return Err(CliError::config(
                "eval",
                "windows must be positive (scoring window at least 2)",
            ));
        }
        if self.intensity_bins.len() < 2 || self.intensity_bins.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(CliError::config("eval", "intensity_bins must be strictly increasing"));
        }
        Ok(())
    }
}
