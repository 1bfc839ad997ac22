//! Signal-quality and rater-agreement metrics.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::recording::{Hypnogram, Stage};
use crate::spectral::fft_real;

/// Zero-normalized cross-correlation with population standard deviations.
pub fn zncc(f: &[f64], t: &[f64]) -> Result<f64> {
    if f.len() != t.len() {
        return Err(Error::LengthMismatch(format!("{} vs {} samples", f.len(), t.len())));
    }
    if f.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: f.len() });
    }
    if f.iter().chain(t).any(|v| v.is_nan()) {
        return Err(Error::NanInput);
    }
    let n = f.len() as f64;
    let mf = f.iter().sum::<f64>() / n;
    let mt = t.iter().sum::<f64>() / n;
    let sf = (f.iter().map(|v| (v - mf).powi(2)).sum::<f64>() / n).sqrt();
    let st = (t.iter().map(|v| (v - mt).powi(2)).sum::<f64>() / n).sqrt();
    if sf == 0.0 || st == 0.0 {
        return Err(Error::Undefined("zncc of a constant sequence".into()));
    }
    let s: f64 = f.iter().zip(t).map(|(a, b)| (a - mf) * (b - mt)).sum();
    Ok((s / (n * sf * st)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum EegBand {
    Delta,
    Theta,
    Alpha,
    Beta,
}

impl EegBand {
    pub const ALL: [EegBand; 4] = [EegBand::Delta, EegBand::Theta, EegBand::Alpha, EegBand::Beta];

    pub fn range_hz(self) -> (f64, f64) {
        match self {
            EegBand::Delta => (0.5, 4.0),
            EegBand::Theta => (4.0, 7.0),
            EegBand::Alpha => (8.0, 12.0),
            EegBand::Beta => (12.0, 25.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum CoherenceLabel {
    None,
    Low,
    Medium,
    High,
    VeryHigh,
}

impl CoherenceLabel {
    pub fn for_value(c: f64) -> CoherenceLabel {
        if c >= 0.5 {
            CoherenceLabel::VeryHigh
        } else if c >= 0.4 {
            CoherenceLabel::High
        } else if c >= 0.3 {
            CoherenceLabel::Medium
        } else if c >= 0.2 {
            CoherenceLabel::Low
        } else {
            CoherenceLabel::None
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoherenceReport {
    pub freqs_hz: Vec<f64>,
    pub coherence: Vec<f64>,
    pub band_means: BTreeMap<EegBand, f64>,
    pub band_labels: BTreeMap<EegBand, CoherenceLabel>,
    pub segments: usize,
}

pub const WELCH_SEGMENT_S: f64 = 4.0;
pub const COHERENCE_MIN_S: f64 = 8.0;
const COHERENCE_MIN_SEGMENTS: usize = 3;

/// Welch magnitude-squared coherence: 4 s periodic Hann segments with 50%
/// overlap, each demeaned. Bins where either auto-spectrum is zero get 0.
pub fn msc_coherence(x: &[f64], y: &[f64], fs_hz: f64) -> Result<CoherenceReport> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(format!("{} vs {} samples", x.len(), y.len())));
    }
    let seg = (WELCH_SEGMENT_S * fs_hz).round() as usize;
    let hop = seg / 2;
    let min_len = (COHERENCE_MIN_S * fs_hz).round() as usize;
    if x.len() < min_len.max(seg) {
        return Err(Error::TooShort { needed: min_len.max(seg), got: x.len() });
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::NanInput);
    }
    let segments = (x.len() - seg) / hop + 1;
    if segments < COHERENCE_MIN_SEGMENTS {
        return Err(invalid(format!("coherence needs at least {COHERENCE_MIN_SEGMENTS} segments, got {segments}")));
    }
    let win: Vec<f64> = (0..seg).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg as f64).cos()).collect();
    let bins = seg / 2 + 1;
    let mut gxx = vec![0.0; bins];
    let mut gyy = vec![0.0; bins];
    let mut gxy_re = vec![0.0; bins];
    let mut gxy_im = vec![0.0; bins];
    let prep = |s: &[f64]| {
        let m = s.iter().sum::<f64>() / s.len() as f64;
        s.iter().zip(&win).map(|(v, w)| (v - m) * w).collect::<Vec<f64>>()
    };
    for k in 0..segments {
        let a = k * hop;
        let fx = fft_real(&prep(&x[a..a + seg]));
        let fy = fft_real(&prep(&y[a..a + seg]));
        for b in 0..bins {
            gxx[b] += fx[b].norm_sqr();
            gyy[b] += fy[b].norm_sqr();
            let c = fx[b] * fy[b].conj();
            gxy_re[b] += c.re;
            gxy_im[b] += c.im;
        }
    }
    let coherence: Vec<f64> = (0..bins)
        .map(|b| {
            let d = gxx[b] * gyy[b];
            if d > 0.0 {
                ((gxy_re[b].powi(2) + gxy_im[b].powi(2)) / d).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    let freqs_hz: Vec<f64> = (0..bins).map(|b| b as f64 * fs_hz / seg as f64).collect();
    let mut band_means = BTreeMap::new();
    let mut band_labels = BTreeMap::new();
    for band in EegBand::ALL {
        let (lo, hi) = band.range_hz();
        let vals: Vec<f64> =
            freqs_hz.iter().zip(&coherence).filter(|(f, _)| **f >= lo && **f <= hi).map(|(_, c)| *c).collect();
        if vals.is_empty() {
            continue;
        }
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        band_means.insert(band, m);
        band_labels.insert(band, CoherenceLabel::for_value(m));
    }
    Ok(CoherenceReport { freqs_hz, coherence, band_means, band_labels, segments })
}

/// Cohen's kappa over any label alphabet.
pub fn cohens_kappa_labels<T: Ord + Copy>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(format!("{} vs {} epochs", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let n = a.len() as f64;
    let mut ma: BTreeMap<T, usize> = BTreeMap::new();
    let mut mb: BTreeMap<T, usize> = BTreeMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        *ma.entry(*x).or_default() += 1;
        *mb.entry(*y).or_default() += 1;
        agree += usize::from(x == y);
    }
    let po = agree as f64 / n;
    let pe: f64 = ma.iter().map(|(k, ca)| *ca as f64 * *mb.get(k).unwrap_or(&0) as f64).sum::<f64>() / (n * n);
    if pe >= 1.0 {
        return Err(Error::Undefined("kappa with chance agreement 1 (both raters constant)".into()));
    }
    Ok((po - pe) / (1.0 - pe))
}

pub fn cohens_kappa(a: &Hypnogram, b: &Hypnogram) -> Result<f64> {
    cohens_kappa_labels(&a.stages, &b.stages)
}

/// Square count table, rows = truth, columns = prediction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionMatrix<T> {
    pub classes: Vec<T>,
    pub counts: Vec<Vec<usize>>,
}

impl<T> ConfusionMatrix<T> {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassScores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    /// Set when a precision, recall or F1 denominator was zero.
    pub degenerate: bool,
}

impl ClassScores {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> ClassScores {
        let div = |a: usize, b: usize| if b == 0 { (0.0, true) } else { (a as f64 / b as f64, false) };
        let (precision, d1) = div(tp, tp + fp);
        let (recall, d2) = div(tp, tp + fn_);
        let (f1, d3) = div(2 * tp, 2 * tp + fp + fn_);
        let (accuracy, _) = div(tp + tn, tp + fp + fn_ + tn);
        ClassScores { accuracy, precision, recall, f1, tp, fp, fn_, tn, degenerate: d1 || d2 || d3 }
    }
}

/// One-vs-rest scores per class, in `classes` order.
pub fn confusion_and_scores<T: PartialEq + Copy + std::fmt::Debug>(
    truth: &[T],
    predicted: &[T],
    classes: &[T],
) -> Result<(ConfusionMatrix<T>, Vec<ClassScores>)> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch(format!("{} truth vs {} predicted", truth.len(), predicted.len())));
    }
    if truth.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let pos =
        |v: &T| classes.iter().position(|c| c == v).ok_or_else(|| invalid(format!("label {v:?} not in class set")));
    let k = classes.len();
    let mut counts = vec![vec![0usize; k]; k];
    for (t, p) in truth.iter().zip(predicted) {
        counts[pos(t)?][pos(p)?] += 1;
    }
    let n = truth.len();
    let scores = (0..k)
        .map(|c| {
            let tp = counts[c][c];
            let fn_ = counts[c].iter().sum::<usize>() - tp;
            let fp = counts.iter().map(|r| r[c]).sum::<usize>() - tp;
            ClassScores::from_counts(tp, fp, fn_, n - tp - fp - fn_)
        })
        .collect();
    Ok((ConfusionMatrix { classes: classes.to_vec(), counts }, scores))
}

pub fn stage_scores(truth: &Hypnogram, predicted: &Hypnogram) -> Result<(ConfusionMatrix<Stage>, Vec<ClassScores>)> {
    confusion_and_scores(&truth.stages, &predicted.stages, &Stage::ALL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zncc_cases() {
        let x = noise(500, 1);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((zncc(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((zncc(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!(zncc(&x, &[1.0; 500]).is_err());
        let mut small = 0;
        for s in 0..100 {
            if zncc(&noise(10_000, 100 + s), &noise(10_000, 500 + s)).unwrap().abs() < 0.05 {
                small += 1;
            }
        }
        assert!(small >= 95);
    }

    #[test]
    fn coherence_cases() {
        let fs = 125.0;
        let x = noise(30 * 125, 2);
        let mut y = vec![0.0; 5];
        y.extend_from_slice(&x[..x.len() - 5]);
        let r = msc_coherence(&x, &y, fs).unwrap();
        assert!(r.band_means.values().all(|&m| m >= 0.99), "{:?}", r.band_means);
        assert!(r.coherence.iter().all(|c| (0.0..=1.0).contains(c)));
        let scaled: Vec<f64> = y.iter().map(|v| 3.0 * v).collect();
        let r2 = msc_coherence(&x, &scaled, fs).unwrap();
        for (a, b) in r.coherence.iter().zip(&r2.coherence) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut low = 0;
        for s in 0..50 {
            let r = msc_coherence(&noise(3750, 10 + s), &noise(3750, 900 + s), fs).unwrap();
            if r.band_means.values().all(|&m| m <= 0.3) {
                low += 1;
            }
        }
        assert!(low >= 45);
        assert!(msc_coherence(&x[..900], &y[..900], fs).is_err());
        assert_eq!(msc_coherence(&x[..1000], &y[..1000], fs).unwrap().segments, 3);
    }

    #[test]
    fn label_boundaries() {
        assert_eq!(CoherenceLabel::for_value(0.45), CoherenceLabel::High);
        assert_eq!(CoherenceLabel::for_value(0.2), CoherenceLabel::Low);
        assert_eq!(CoherenceLabel::for_value(0.19999999999999998), CoherenceLabel::None);
        assert_eq!(CoherenceLabel::for_value(0.3), CoherenceLabel::Medium);
        assert_eq!(CoherenceLabel::for_value(0.4), CoherenceLabel::High);
        assert_eq!(CoherenceLabel::for_value(0.5), CoherenceLabel::VeryHigh);
        assert_eq!(CoherenceLabel::for_value(1.0), CoherenceLabel::VeryHigh);
    }

    #[test]
    fn kappa_table_oracle() {
        // rater a: 60 yes / 40 no; rater b: 70 yes / 30 no; agreement 45 + 15
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (x, y, n) in [(1, 1, 45), (1, 0, 15), (0, 1, 25), (0, 0, 15)] {
            a.extend(std::iter::repeat_n(x, n));
            b.extend(std::iter::repeat_n(y, n));
        }
        let k = cohens_kappa_labels(&a, &b).unwrap();
        let pe = (60.0 * 70.0 + 40.0 * 30.0) / 10_000.0;
        assert!((pe - 0.54f64).abs() < 1e-15);
        assert!((k - (0.6 - pe) / (1.0 - pe)).abs() < 1e-12);
        assert!((k - 0.130_434_782_608_695_6).abs() < 1e-12);
        assert!((cohens_kappa_labels(&b, &a).unwrap() - k).abs() < 1e-15);
    }

    #[test]
    fn kappa_edges() {
        let h = Hypnogram::new(vec![Stage::Wake, Stage::Light, Stage::Deep, Stage::Rem]);
        assert_eq!(cohens_kappa(&h, &h).unwrap(), 1.0);
        let c = Hypnogram::new(vec![Stage::Light; 5]);
        assert!(matches!(cohens_kappa(&c, &c), Err(Error::Undefined(_))));
        assert!(cohens_kappa(&h, &c).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<u8> = (0..10_000).map(|_| rng.random_range(0..4)).collect();
        let mut b = a.clone();
        use rand::seq::SliceRandom;
        b.shuffle(&mut rng);
        assert!(cohens_kappa_labels(&a, &b).unwrap().abs() < 0.05);
    }

    #[test]
    fn scores_oracle() {
        let s = ClassScores::from_counts(80, 20, 10, 90);
        assert!((s.precision - 0.8).abs() < 1e-15);
        assert!((s.recall - 8.0 / 9.0).abs() < 1e-15);
        assert!((s.f1 - 160.0 / 190.0).abs() < 1e-15);
        assert!(!s.degenerate);
        let t = [Stage::Wake, Stage::Light, Stage::Light, Stage::Deep];
        let (cm, sc) = confusion_and_scores(&t, &t, &Stage::ALL).unwrap();
        assert_eq!(cm.total(), 4);
        for s in &sc[..3] {
            assert_eq!((s.accuracy, s.precision, s.recall, s.f1), (1.0, 1.0, 1.0, 1.0));
        }
        assert!(sc[3].degenerate);
        assert_eq!((sc[3].precision, sc[3].recall, sc[3].f1), (0.0, 0.0, 0.0));
        assert!(confusion_and_scores::<Stage>(&[], &[], &Stage::ALL).is_err());
        assert!(confusion_and_scores(&[1], &[5], &[1, 2]).is_err());
    }
}
