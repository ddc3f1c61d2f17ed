//! Plain-text tables. Every file starts with a `# roadsense <kind> v1` line,
//! followed by a CSV header (or `key=value` lines for calibration).
//!
//! Angles are written in radians with 9 significant digits, pixel quantities with
//! 4 decimals.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use roadsense_core::eval::{Label, LabeledEvent, RocPoint, RotationIntensityBin};
use roadsense_core::geometry::{CameraIntrinsics, PointPair, TranslationDirection};
use roadsense_core::nalgebra::{Point2, Vector3};
use roadsense_core::pitch::CorrespondenceSet;
use roadsense_core::signal::{DetectionEvent, PipelineOutput, TrackedPoint, VehicleTrack};
use roadsense_core::synth::GroundTruth;

use crate::error::{CliError, Result};

pub const VERSION: u32 = 1;

// Adding zero folds -0.0 into 0.0.
pub fn angle(v: f64) -> String {
    format!("{:.8e}", v + 0.0)
}

pub fn pixel(v: f64) -> String {
    let s = format!("{:.4}", v + 0.0);
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

fn opt_pixel(v: Option<f64>) -> String {
    v.map(pixel).unwrap_or_default()
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn version_line(kind: &str) -> String {
    format!("# roadsense {kind} v{VERSION}")
}

/// Builds a table in memory; `finish` returns the file contents.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(kind: &str, header: &[&str]) -> Self {
        let mut buf = version_line(kind).into_bytes();
        buf.push(b'\n');
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(buf);
        writer.write_record(header).expect("in-memory write");
        Self { writer }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    pub fn finish(self) -> String {
        let bytes = self.writer.into_inner().expect("in-memory flush");
        String::from_utf8(bytes).expect("tables are utf-8")
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn read_versioned(path: &Path, kind: &str) -> Result<String> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let first = text.lines().next().unwrap_or("");
    if first.trim_end() != version_line(kind) {
        return Err(CliError::format(path, 1, format!("expected `{}`", version_line(kind))));
    }
    Ok(text)
}

/// Parsed CSV rows with their 1-based line numbers in the file.
struct Rows<'a> {
    path: &'a Path,
    rows: Vec<(usize, csv::StringRecord)>,
}

fn read_table<'a>(path: &'a Path, kind: &str, header: &[&str]) -> Result<Rows<'a>> {
    let text = read_versioned(path, kind)?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let found = reader.headers().map_err(|e| CliError::format(path, 2, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(CliError::format(
            path,
            2,
            format!("expected header `{}`", header.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            CliError::format(path, line, e)
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        rows.push((line, rec));
    }
    Ok(Rows { path, rows })
}

impl Rows<'_> {
    fn parse<T: std::str::FromStr>(&self, line: usize, rec: &csv::StringRecord, col: usize, name: &str) -> Result<T> {
        let raw = rec.get(col).unwrap_or("");
        raw.parse()
            .map_err(|_| CliError::format(self.path, line, format!("bad {name} `{raw}`")))
    }

    fn optional(&self, line: usize, rec: &csv::StringRecord, col: usize, name: &str) -> Result<Option<f64>> {
        match rec.get(col).unwrap_or("") {
            "" => Ok(None),
            _ => self.parse(line, rec, col, name).map(Some),
        }
    }

    fn flag(&self, line: usize, rec: &csv::StringRecord, col: usize, name: &str) -> Result<bool> {
        match rec.get(col).unwrap_or("") {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            raw => Err(CliError::format(self.path, line, format!("bad {name} `{raw}`"))),
        }
    }
}

/// Camera calibration plus sequence frame rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub intrinsics: CameraIntrinsics,
    pub translation: TranslationDirection,
    pub fps: f64,
}

pub fn calibration_to_string(cal: &Calibration) -> String {
    let k = &cal.intrinsics;
    let t = cal.translation.vector();
    let mut out = version_line("calibration");
    out.push('\n');
    for (key, v) in [("fx", k.fx()), ("fy", k.fy()), ("cx", k.cx()), ("cy", k.cy())] {
        let _ = writeln!(out, "{key}={}", pixel(v));
    }
    let _ = writeln!(out, "width={}", k.width());
    let _ = writeln!(out, "height={}", k.height());
    for (key, v) in [("t_x", t.x), ("t_y", t.y), ("t_z", t.z)] {
        let _ = writeln!(out, "{key}={}", angle(v));
    }
    let _ = writeln!(out, "fps={}", cal.fps);
    out
}

pub fn read_calibration(path: &Path) -> Result<Calibration> {
    let text = read_versioned(path, "calibration")?;
    let mut values = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::format(path, i + 1, "expected key=value"))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| CliError::format(path, i + 1, format!("bad value for `{}`", key.trim())))?;
        if values.insert(key.trim().to_string(), (i + 1, value)).is_some() {
            return Err(CliError::format(path, i + 1, format!("duplicate key `{}`", key.trim())));
        }
    }
    let get = |key: &str| -> Result<f64> {
        values
            .get(key)
            .map(|v| v.1)
            .ok_or_else(|| CliError::format(path, 0, format!("missing key `{key}`")))
    };
    let dim = |key: &str| -> Result<u32> {
        let v = get(key)?;
        if v.fract() != 0.0 || !(1.0..=u32::MAX as f64).contains(&v) {
            return Err(CliError::format(
                path,
                values[key].0,
                format!("`{key}` must be a positive integer"),
            ));
        }
        Ok(v as u32)
    };
    let intrinsics = CameraIntrinsics::new(
        get("fx")?,
        get("fy")?,
        get("cx")?,
        get("cy")?,
        dim("width")?,
        dim("height")?,
    )
    .map_err(|e| CliError::format(path, 0, e))?;
    let translation = TranslationDirection::new(Vector3::new(get("t_x")?, get("t_y")?, get("t_z")?))
        .map_err(|e| CliError::format(path, 0, e))?;
    let fps = values.get("fps").map(|v| v.1).unwrap_or(30.0);
    if !(fps.is_finite() && fps > 0.0) {
        return Err(CliError::format(path, values["fps"].0, "fps must be positive"));
    }
    Ok(Calibration {
        intrinsics,
        translation,
        fps,
    })
}

const CORRESPONDENCE_HEADER: [&str; 7] = ["frame", "point_id", "x0", "y0", "x1", "y1", "is_static"];

/// `sets[k]` holds the matches from frame `k` to frame `k + 1`.
pub fn correspondences_to_string(sets: &[CorrespondenceSet]) -> String {
    let mut table = Table::new("correspondences", &CORRESPONDENCE_HEADER);
    for (frame, set) in sets.iter().enumerate() {
        for (id, p) in set.iter().enumerate() {
            table.row([
                frame.to_string(),
                id.to_string(),
                pixel(p.p0.x),
                pixel(p.p0.y),
                pixel(p.p1.x),
                pixel(p.p1.y),
                flag(p.is_static).to_string(),
            ]);
        }
    }
    table.finish()
}

/// Reads correspondence sets; the result has one set per frame up to the largest frame seen.
pub fn read_correspondences(path: &Path) -> Result<Vec<CorrespondenceSet>> {
    let rows = read_table(path, "correspondences", &CORRESPONDENCE_HEADER)?;
    let mut sets: Vec<CorrespondenceSet> = Vec::new();
    for (line, rec) in &rows.rows {
        let frame: usize = rows.parse(*line, rec, 0, "frame")?;
        let _id: u64 = rows.parse(*line, rec, 1, "point_id")?;
        let c = |col, name| rows.parse::<f64>(*line, rec, col, name);
        let pair = PointPair {
            p0: Point2::new(c(2, "x0")?, c(3, "y0")?),
            p1: Point2::new(c(4, "x1")?, c(5, "y1")?),
            is_static: rows.flag(*line, rec, 6, "is_static")?,
        };
        if sets.len() <= frame {
            sets.resize_with(frame + 1, Vec::new);
        }
        sets[frame].push(pair);
    }
    Ok(sets)
}

const TRACK_HEADER: [&str; 5] = ["frame", "point_id", "x", "y", "valid"];

pub fn track_to_string(track: &VehicleTrack) -> String {
    let mut table = Table::new("track", &TRACK_HEADER);
    for (frame, points) in track.frames().iter().enumerate() {
        for (id, p) in points.iter().enumerate() {
            let coord = |v: f64| if v.is_finite() { pixel(v) } else { String::new() };
            table.row([
                frame.to_string(),
                id.to_string(),
                coord(p.x),
                coord(p.y),
                flag(p.valid).to_string(),
            ]);
        }
    }
    table.finish()
}

/// Frames must be numbered contiguously from 0.
pub fn read_track(path: &Path, fps: f64) -> Result<VehicleTrack> {
    let rows = read_table(path, "track", &TRACK_HEADER)?;
    let mut frames: Vec<Vec<TrackedPoint>> = Vec::new();
    for (line, rec) in &rows.rows {
        let frame: usize = rows.parse(*line, rec, 0, "frame")?;
        let _id: u64 = rows.parse(*line, rec, 1, "point_id")?;
        let x = rows.optional(*line, rec, 2, "x")?;
        let y = rows.optional(*line, rec, 3, "y")?;
        let valid = rows.flag(*line, rec, 4, "valid")?;
        let point = match (x, y) {
            (Some(x), Some(y)) => TrackedPoint { x, y, valid },
            _ if !valid => TrackedPoint {
                x: f64::NAN,
                y: f64::NAN,
                valid,
            },
            _ => return Err(CliError::format(path, *line, "valid point without coordinates")),
        };
        if frame > frames.len() {
            return Err(CliError::format(
                path,
                *line,
                format!("frame {frame} skips frame {}", frames.len()),
            ));
        }
        if frame == frames.len() {
            frames.push(Vec::new());
        }
        frames[frame].push(point);
    }
    VehicleTrack::new(fps, frames).map_err(|e| CliError::format(path, 0, e))
}

const LABEL_HEADER: [&str; 3] = ["sequence", "apex_frame", "label"];

pub fn labels_to_string(labels: &[LabeledEvent]) -> String {
    let mut table = Table::new("labels", &LABEL_HEADER);
    for l in labels {
        table.row([
            l.sequence.clone(),
            l.apex_frame.to_string(),
            l.label.as_str().to_string(),
        ]);
    }
    table.finish()
}

pub fn read_labels(path: &Path) -> Result<Vec<LabeledEvent>> {
    let rows = read_table(path, "labels", &LABEL_HEADER)?;
    rows.rows
        .iter()
        .map(|(line, rec)| {
            let label = match rec.get(2).unwrap_or("") {
                "anomaly" => Label::Anomaly,
                "background" => Label::Background,
                raw => return Err(CliError::format(path, *line, format!("bad label `{raw}`"))),
            };
            Ok(LabeledEvent {
                sequence: rec.get(0).unwrap_or("").to_string(),
                apex_frame: rows.parse(*line, rec, 1, "apex_frame")?,
                label,
            })
        })
        .collect()
}

pub fn pitch_truth_to_string(truth: &GroundTruth) -> String {
    let mut table = Table::new("pitch_true", &["frame", "phi_true", "phi_imu", "vehicle_displacement"]);
    for (k, phi) in truth.pitch.iter().enumerate() {
        let imu = truth.imu_pitch.as_ref().map(|v| angle(v[k])).unwrap_or_default();
        table.row([
            k.to_string(),
            angle(*phi),
            imu,
            format!("{:.6}", truth.vehicle_displacement[k] + 0.0),
        ]);
    }
    table.finish()
}

const RESPONSE_HEADER: [&str; 10] = [
    "frame",
    "y_hat",
    "y_comp",
    "phi_rel",
    "phi_cum",
    "s",
    "held",
    "converged",
    "n_pairs",
    "interpolated",
];

/// Per-frame table. Row `k > 0` carries the estimate for the pair `k-1 -> k`.
pub fn response_to_string(out: &PipelineOutput) -> String {
    let mut table = Table::new("response", &RESPONSE_HEADER);
    let r = &out.response;
    let cum = out.pitch.cumulative();
    for (k, phi_cum) in cum.iter().enumerate() {
        let est = k.checked_sub(1).map(|i| &out.pitch.estimates[i]);
        table.row([
            k.to_string(),
            pixel(r.y_hat[k]),
            pixel(r.y_comp[k]),
            est.map(|e| angle(e.phi_rel)).unwrap_or_default(),
            angle(*phi_cum),
            opt_pixel(r.s[k]),
            est.map(|e| flag(e.held).to_string()).unwrap_or_default(),
            est.map(|e| flag(e.converged).to_string()).unwrap_or_default(),
            est.map(|e| e.n_pairs_used.to_string()).unwrap_or_default(),
            flag(r.interpolated[k]).to_string(),
        ]);
    }
    table.finish()
}

/// The columns of a response table needed for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTable {
    pub s: Vec<Option<f64>>,
    pub phi_cum: Vec<f64>,
}

pub fn read_response(path: &Path) -> Result<ResponseTable> {
    let rows = read_table(path, "response", &RESPONSE_HEADER)?;
    let mut s = Vec::with_capacity(rows.rows.len());
    let mut phi_cum = Vec::with_capacity(rows.rows.len());
    for (k, (line, rec)) in rows.rows.iter().enumerate() {
        let frame: usize = rows.parse(*line, rec, 0, "frame")?;
        if frame != k {
            return Err(CliError::format(
                path,
                *line,
                format!("expected frame {k}, found {frame}"),
            ));
        }
        phi_cum.push(rows.parse(*line, rec, 4, "phi_cum")?);
        s.push(rows.optional(*line, rec, 5, "s")?);
    }
    Ok(ResponseTable { s, phi_cum })
}

pub fn detections_to_string(detections: &[DetectionEvent]) -> String {
    let mut table = Table::new("detections", &["frame", "response", "start", "end"]);
    for d in detections {
        table.row([
            d.frame.to_string(),
            pixel(d.response),
            d.start.to_string(),
            d.end.to_string(),
        ]);
    }
    table.finish()
}

pub fn roc_to_string(points: &[RocPoint]) -> String {
    let mut table = Table::new("roc", &["threshold", "fpr", "tpr"]);
    for p in points {
        let th = if p.threshold.is_finite() {
            pixel(p.threshold)
        } else {
            "inf".into()
        };
        table.row([th, format!("{:.6}", p.fpr), format!("{:.6}", p.tpr)]);
    }
    table.finish()
}

pub fn fpr_intensity_to_string(bins: &[RotationIntensityBin]) -> String {
    let mut table = Table::new("fpr_intensity", &["intensity_lo", "intensity_hi", "fpr", "windows"]);
    for b in bins {
        table.row([angle(b.lo), angle(b.hi), format!("{:.6}", b.fpr), b.count.to_string()]);
    }
    table.finish()
}

pub fn scores_to_string(rows: &[(LabeledEvent, f64)]) -> String {
    let mut table = Table::new("scores", &["sequence", "apex_frame", "label", "score"]);
    for (ev, score) in rows {
        table.row([
            ev.sequence.clone(),
            ev.apex_frame.to_string(),
            ev.label.as_str().to_string(),
            pixel(*score),
        ]);
    }
    table.finish()
}

const DISTANCE_HEADER: [&str; 2] = ["distance", "response"];

pub fn distance_table_to_string(samples: &[(f64, f64)]) -> String {
    let mut table = Table::new("distance_response", &DISTANCE_HEADER);
    for (d, s) in samples {
        table.row([format!("{d:.4}"), pixel(*s)]);
    }
    table.finish()
}

pub fn read_distance_table(path: &Path) -> Result<Vec<(f64, f64)>> {
    let rows = read_table(path, "distance_response", &DISTANCE_HEADER)?;
    rows.rows
        .iter()
        .map(|(line, rec)| {
            Ok((
                rows.parse(*line, rec, 0, "distance")?,
                rows.parse(*line, rec, 1, "response")?,
            ))
        })
        .collect()
}
