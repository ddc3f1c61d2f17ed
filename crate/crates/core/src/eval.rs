//! Detection metrics and evaluation protocols.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no response series for sequence `{0}`")]
    MissingSequence(String),
    #[error("response undefined around frame {apex} of sequence `{sequence}`")]
    UndefinedResponse { sequence: String, apex: usize },
    #[error("both classes are required")]
    SingleClass,
    #[error("need at least {required} events per class, have {positives} positive and {negatives} negative")]
    TooFewEvents {
        required: usize,
        positives: usize,
        negatives: usize,
    },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Anomaly,
    Background,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Anomaly
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Anomaly => "anomaly",
            Label::Background => "background",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct LabeledEvent {
    pub sequence: String,
    pub apex_frame: usize,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub score: f64,
    pub label: Label,
}

/// Scores every event with the maximum response within `window / 2` frames of its apex.
pub fn score_events(
    events: &[LabeledEvent],
    responses: &BTreeMap<String, Vec<Option<f64>>>,
    window: usize,
) -> Result<Vec<Scored>, EvalError> {
    let half = window / 2;
    events
        .iter()
        .map(|ev| {
            let s = responses
                .get(&ev.sequence)
                .ok_or_else(|| EvalError::MissingSequence(ev.sequence.clone()))?;
            let undefined = || EvalError::UndefinedResponse {
                sequence: ev.sequence.clone(),
                apex: ev.apex_frame,
            };
            if s.is_empty() {
                return Err(undefined());
            }
            let lo = ev.apex_frame.saturating_sub(half).min(s.len() - 1);
            let hi = (ev.apex_frame + half).min(s.len() - 1);
            let score = s[lo..=hi]
                .iter()
                .flatten()
                .cloned()
                .reduce(f64::max)
                .ok_or_else(undefined)?;
            Ok(Scored { score, label: ev.label })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Events with `score >= threshold` are predicted positive.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Roc {
    /// Vertices from `(0, 0)` at threshold `+inf` to `(1, 1)`, one per distinct score.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

fn class_counts(scored: &[Scored]) -> (usize, usize) {
    let pos = scored.iter().filter(|s| s.label.is_positive()).count();
    (pos, scored.len() - pos)
}

/// ROC by sweeping thresholds over distinct scores; AUC by the trapezoidal rule.
pub fn roc_auc(scored: &[Scored]) -> Result<Roc, EvalError> {
    let (n_pos, n_neg) = class_counts(scored);
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut sorted: Vec<Scored> = scored.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));

    let mut points = alloc::vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].score;
        while i < sorted.len() && sorted[i].score == threshold {
            if sorted[i].label.is_positive() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = *points.last().expect("starts with the origin");
        let point = RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold,
        };
        auc += (point.fpr - prev.fpr) * (point.tpr + prev.tpr) * 0.5;
        points.push(point);
    }
    Ok(Roc { points, auc })
}

/// Confusion counts at `score >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn at(scored: &[Scored], threshold: f64) -> Self {
        scored.iter().fold(Self::default(), |mut c, s| {
            match (s.score >= threshold, s.label.is_positive()) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
            c
        })
    }

    pub fn tpr(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn tnr(&self) -> f64 {
        ratio(self.tn, self.tn + self.fp)
    }

    pub fn balanced_accuracy(&self) -> f64 {
        0.5 * (self.tpr() + self.tnr())
    }

    /// F1; zero when nothing is predicted positive or there are no positives.
    pub fn f_score(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Threshold maximizing F1 on `scored`; ties go to the smallest threshold.
///
/// Candidates are the lowest score (everything positive) and the midpoints between
/// consecutive distinct scores, so a separating threshold sits inside the gap.
pub fn best_f_threshold(scored: &[Scored]) -> f64 {
    let mut distinct: Vec<f64> = scored.iter().map(|s| s.score).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let candidates = distinct
        .first()
        .copied()
        .into_iter()
        .chain(distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    for th in candidates {
        let f = Confusion::at(scored, th).f_score();
        if f > best.0 {
            best = (f, th);
        }
    }
    best.1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: libm::sqrt(var),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldResult {
    pub threshold: f64,
    pub balanced_accuracy: f64,
    pub f_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub balanced_accuracy: MeanStd,
    pub f_score: MeanStd,
    pub auc: f64,
    pub roc: Vec<RocPoint>,
    pub folds: Vec<FoldResult>,
    pub k_folds: usize,
    pub seed: u64,
    /// Folds are class-stratified.
    pub stratified: bool,
}

/// Stratified k-fold evaluation with the F1-optimal threshold chosen on each training split.
pub fn cv_threshold_metrics(scored: &[Scored], k_folds: usize, seed: u64) -> Result<MetricsReport, EvalError> {
    if k_folds < 2 {
        return Err(EvalError::InvalidArgument("k_folds must be at least 2"));
    }
    let roc = roc_auc(scored)?;
    let (n_pos, n_neg) = class_counts(scored);
    if n_pos < k_folds || n_neg < k_folds {
        return Err(EvalError::TooFewEvents {
            required: k_folds,
            positives: n_pos,
            negatives: n_neg,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = alloc::vec![0usize; scored.len()];
    for positive in [true, false] {
        let mut idx: Vec<usize> = (0..scored.len())
            .filter(|&i| scored[i].label.is_positive() == positive)
            .collect();
        idx.shuffle(&mut rng);
        for (j, i) in idx.into_iter().enumerate() {
            fold_of[i] = j % k_folds;
        }
    }

    let mut folds = Vec::with_capacity(k_folds);
    for fold in 0..k_folds {
        let split = |in_test: bool| -> Vec<Scored> {
            scored
                .iter()
                .zip(&fold_of)
                .filter(|(_, f)| (**f == fold) == in_test)
                .map(|(s, _)| *s)
                .collect()
        };
        let (test, train) = (split(true), split(false));
        let threshold = best_f_threshold(&train);
        let c = Confusion::at(&test, threshold);
        folds.push(FoldResult {
            threshold,
            balanced_accuracy: c.balanced_accuracy(),
            f_score: c.f_score(),
        });
    }
    let ba: Vec<f64> = folds.iter().map(|f| f.balanced_accuracy).collect();
    let fs: Vec<f64> = folds.iter().map(|f| f.f_score).collect();
    Ok(MetricsReport {
        balanced_accuracy: MeanStd::of(&ba),
        f_score: MeanStd::of(&fs),
        auc: roc.auc,
        roc: roc.points,
        folds,
        k_folds,
        seed,
        stratified: true,
    })
}

/// Response and cumulative pitch of one sequence without vehicle anomalies.
#[derive(Debug, Clone, Copy)]
pub struct IntensitySeries<'a> {
    pub s: &'a [Option<f64>],
    pub phi_cum: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationIntensityBin {
    /// Intensity range `[lo, hi)` in radians.
    pub lo: f64,
    pub hi: f64,
    /// Fraction of windows in the bin whose response exceeds the threshold.
    pub fpr: f64,
    pub count: usize,
}

/// Mean of `|phi|` over the trailing `window` frames (shorter at the start).
pub fn rotation_intensity(phi_cum: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..phi_cum.len())
        .map(|t| {
            let lo = (t + 1).saturating_sub(window);
            let w = &phi_cum[lo..=t];
            w.iter().map(|p| libm::fabs(*p)).sum::<f64>() / w.len() as f64
        })
        .collect()
}

/// Per-window false-positive rate binned by rotation intensity.
///
/// Every frame with a defined response is one window; it is a false positive when
/// `s > threshold`. Only occupied bins are returned, in edge order.
pub fn fpr_vs_rotation_intensity(
    sequences: &[IntensitySeries<'_>],
    intensity_window: usize,
    threshold: f64,
    bin_edges: &[f64],
) -> Result<Vec<RotationIntensityBin>, EvalError> {
    if bin_edges.len() < 2 || bin_edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(EvalError::InvalidArgument("bin edges must be strictly increasing"));
    }
    let nbins = bin_edges.len() - 1;
    let mut counts = alloc::vec![(0usize, 0usize); nbins];
    for seq in sequences {
        if seq.s.len() != seq.phi_cum.len() {
            return Err(EvalError::LengthMismatch(seq.s.len(), seq.phi_cum.len()));
        }
        let intensity = rotation_intensity(seq.phi_cum, intensity_window);
        for (s, x) in seq.s.iter().zip(&intensity) {
            let Some(s) = s else { continue };
            let Some(b) = bin_edges.windows(2).position(|w| *x >= w[0] && *x < w[1]) else {
                continue;
            };
            counts[b].0 += 1;
            if *s > threshold {
                counts[b].1 += 1;
            }
        }
    }
    Ok(counts
        .iter()
        .enumerate()
        .filter(|(_, (n, _))| *n > 0)
        .map(|(b, (n, fp))| RotationIntensityBin {
            lo: bin_edges[b],
            hi: bin_edges[b + 1],
            fpr: *fp as f64 / *n as f64,
            count: *n,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchComparison {
    pub rms: f64,
    pub max_abs: f64,
}

pub fn compare_pitch_tracks(estimated: &[f64], reference: &[f64]) -> Result<PitchComparison, EvalError> {
    if estimated.len() != reference.len() {
        return Err(EvalError::LengthMismatch(estimated.len(), reference.len()));
    }
    if estimated.is_empty() {
        return Err(EvalError::InvalidArgument("empty pitch tracks"));
    }
    let (sq, max_abs) = estimated.iter().zip(reference).fold((0.0, 0.0f64), |(sq, mx), (a, b)| {
        let d = libm::fabs(a - b);
        (sq + d * d, mx.max(d))
    });
    Ok(PitchComparison {
        rms: libm::sqrt(sq / estimated.len() as f64),
        max_abs,
    })
}
