use crate::dsp::{design_butterworth_bandpass, filtfilt, interpolate_gaps, BUTTERWORTH_ORDER};
use crate::error::{Error, Result};
use crate::recording::{EventInterval, EventKind, MICROEVENT_MAX_S, MICROEVENT_MIN_S};

use super::features::{build_feature_channels, window_statistics, FeatureMatrix, DEFAULT_HOP_S};
use super::forest::{ForestModel, Prediction};

pub const EEG_BAND_HZ: (f64, f64) = (0.5, 35.0);
pub const MERGE_GAP_S: f64 = 0.25;

/// Zero-phase 0.5-35 Hz band-limiting applied before feature extraction.
pub fn bandlimit_eeg(eeg: &[f64], fs_hz: f64) -> Result<Vec<f64>> {
    let spec = design_butterworth_bandpass(BUTTERWORTH_ORDER, EEG_BAND_HZ.0, EEG_BAND_HZ.1, fs_hz)?;
    filtfilt(&spec, &interpolate_gaps(eeg))
}

/// Band-limits the EEG, builds the augmented rows and their window statistics.
pub fn extract_features(eeg: &[f64], fs_hz: f64, kind: EventKind) -> Result<FeatureMatrix> {
    let x = bandlimit_eeg(eeg, fs_hz)?;
    let ac = build_feature_channels(&x, fs_hz, kind)?;
    window_statistics(&ac, DEFAULT_HOP_S)
}

#[derive(Debug, Clone, Default)]
pub struct Detections {
    pub events: Vec<EventInterval>,
    /// Merged runs longer than the micro-event maximum, kept out of `events`.
    pub overlong: Vec<(f64, f64)>,
    pub windows: Vec<Prediction>,
    pub window_spans: Vec<(f64, f64)>,
}

/// Joins positive windows whose gap is at most `MERGE_GAP_S` into
/// `[first start, last end]` runs.
pub fn merge_positive_windows(spans: &[(f64, f64)], labels: &[u8]) -> Vec<(f64, f64)> {
    let mut runs: Vec<(f64, f64)> = Vec::new();
    for (&(a, b), &l) in spans.iter().zip(labels) {
        if l != 1 {
            continue;
        }
        match runs.last_mut() {
            Some(r) if a - r.1 <= MERGE_GAP_S + 1e-9 => r.1 = r.1.max(b),
            _ => runs.push((a, b)),
        }
    }
    runs
}

pub fn detect_events(eeg: &[f64], fs_hz: f64, model: &ForestModel, kind: EventKind) -> Result<Detections> {
    if model.kind != kind {
        return Err(Error::InvalidArgument(format!(
            "model was trained for {} but {} was requested",
            model.kind.as_str(),
            kind.as_str()
        )));
    }
    if eeg.len() < (fs_hz * 3.0) as usize {
        return Ok(Detections::default());
    }
    let fm = extract_features(eeg, fs_hz, kind)?;
    let windows = model.predict(&fm)?;
    let spans: Vec<(f64, f64)> = (0..fm.n_rows()).map(|i| fm.window_span_s(i)).collect();
    let labels: Vec<u8> = windows.iter().map(|p| p.label).collect();
    let mut out = Detections { windows, window_spans: spans.clone(), ..Default::default() };
    for (a, b) in merge_positive_windows(&spans, &labels) {
        let d = b - a;
        if d < MICROEVENT_MIN_S {
            continue;
        }
        if d > MICROEVENT_MAX_S {
            out.overlong.push((a, b));
            continue;
        }
        out.events.push(EventInterval::new(kind, a, b)?);
    }
    if !out.overlong.is_empty() {
        log::warn!("{} merged {} runs exceed {MICROEVENT_MAX_S} s", out.overlong.len(), kind.as_str());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DetectorScores {
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Window-level sensitivity, specificity and accuracy. A zero denominator yields 0.
pub fn evaluate_detector(predicted: &[u8], truth: &[u8]) -> Result<DetectorScores> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch(format!("{} predictions but {} truth labels", predicted.len(), truth.len())));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p == 1, t == 1) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(DetectorScores {
        sensitivity: ratio(tp, tp + fn_),
        specificity: ratio(tn, tn + fp),
        accuracy: ratio(tp + tn, predicted.len()),
        tp,
        tn,
        fp,
        fn_,
    })
}
