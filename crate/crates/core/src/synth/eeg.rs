use std::f64::consts::PI;

use rand::Rng;

use crate::error::Result;
use crate::recording::{EventInterval, EventKind, FAST_RATE_HZ};

use super::cardio::fast_len;
use super::noise::{mean_power, pink_noise};
use super::scenario::{ScenarioSpec, KCOMPLEX_NEG_S, KCOMPLEX_POS_S, SPINDLE_DURATION_S};
use super::stream_rng;

pub const EEG_LEVEL_V: f64 = 1.65;
/// RMS of the shared cortical background.
pub const EEG_BACKGROUND_V: f64 = 0.05;
pub const EEG_BAND_HZ: (f64, f64) = (0.5, 35.0);
pub const SPINDLE_FREQ_HZ: (f64, f64) = (11.0, 14.0);
pub const SPINDLE_AMPLITUDE_RMS: (f64, f64) = (2.0, 4.0);
pub const KCOMPLEX_AMPLITUDE_RMS: (f64, f64) = (3.0, 5.0);
pub const EOG_LEVEL_V: f64 = 1.65;
pub const EOG_DRIFT_V: f64 = 0.03;
pub const EOG_DRIFT_HZ: f64 = 0.02;

const STREAM_BACKGROUND: u64 = 10;
const STREAM_EVENTS: u64 = 11;
const STREAM_EOG: u64 = 12;

#[derive(Debug, Clone)]
pub struct EegOutput {
    pub eeg: [Vec<f64>; 2],
    pub eog: [Vec<f64>; 2],
    pub events: Vec<EventInterval>,
    /// Background-to-electrode-noise ratio measured per channel, dB.
    pub snr_db: [f64; 2],
}

/// Hann-windowed sinusoid spanning `dur_s`, centered on `center_s`.
fn add_spindle(x: &mut [f64], fs: f64, center_s: f64, dur_s: f64, freq: f64, amp: f64, phase: f64) {
    let a = center_s - dur_s / 2.0;
    let lo = (a * fs).ceil().max(0.0) as usize;
    let hi = (((a + dur_s) * fs).floor() as usize + 1).min(x.len());
    for (i, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
        let u = (i as f64 / fs - a) / dur_s;
        let w = 0.5 - 0.5 * (2.0 * PI * u).cos();
        *v += amp * w * (2.0 * PI * freq * (i as f64 / fs - a) + phase).sin();
    }
}

/// Negative half-sine lobe then a longer positive one.
fn add_kcomplex(x: &mut [f64], fs: f64, center_s: f64, amp: f64) {
    let a = center_s - (KCOMPLEX_NEG_S + KCOMPLEX_POS_S) / 2.0;
    let mid = a + KCOMPLEX_NEG_S;
    let b = mid + KCOMPLEX_POS_S;
    let lo = (a * fs).ceil().max(0.0) as usize;
    let hi = ((b * fs).floor() as usize + 1).min(x.len());
    for (i, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
        let t = i as f64 / fs;
        *v += if t < mid {
            -amp * (PI * (t - a) / KCOMPLEX_NEG_S).sin()
        } else {
            amp * (PI * (t - mid) / KCOMPLEX_POS_S).sin()
        };
    }
}

/// Two EEG electrodes over a shared pink background, with spindles and
/// K-complexes injected into both, plus slowly drifting EOG placeholders.
pub fn gen_eeg(spec: &ScenarioSpec) -> Result<EegOutput> {
    spec.validate()?;
    let n = fast_len(spec);
    let fs = FAST_RATE_HZ;
    let mut rng = stream_rng(spec.seed, STREAM_BACKGROUND);
    let shared = pink_noise(n, fs, EEG_BAND_HZ.0, EEG_BAND_HZ.1, &mut rng);
    let noise_sd = 10f64.powf(-spec.noise.eeg_snr_db / 20.0);
    let own: [Vec<f64>; 2] = std::array::from_fn(|_| pink_noise(n, fs, EEG_BAND_HZ.0, EEG_BAND_HZ.1, &mut rng));
    let mut snr_db = [0.0; 2];
    let mut eeg: [Vec<f64>; 2] = std::array::from_fn(|c| {
        let noise: Vec<f64> = own[c].iter().map(|v| EEG_BACKGROUND_V * noise_sd * v).collect();
        snr_db[c] = 10.0 * (EEG_BACKGROUND_V.powi(2) * mean_power(&shared) / mean_power(&noise)).log10();
        shared.iter().zip(&noise).map(|(s, e)| EEG_BACKGROUND_V * s + e).collect()
    });
    let rms = EEG_BACKGROUND_V * (1.0 + noise_sd * noise_sd).sqrt();

    let mut ev_rng = stream_rng(spec.seed, STREAM_EVENTS);
    let mut order = spec.events.clone();
    order.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
    let mut events = Vec::with_capacity(order.len());
    for e in &order {
        match e.kind {
            EventKind::Spindle => {
                let dur = ev_rng.random_range(SPINDLE_DURATION_S.0..=SPINDLE_DURATION_S.1);
                let freq = ev_rng.random_range(SPINDLE_FREQ_HZ.0..=SPINDLE_FREQ_HZ.1);
                let amp = rms * ev_rng.random_range(SPINDLE_AMPLITUDE_RMS.0..=SPINDLE_AMPLITUDE_RMS.1);
                let phase = ev_rng.random_range(0.0..2.0 * PI);
                for ch in eeg.iter_mut() {
                    add_spindle(ch, fs, e.time_s, dur, freq, amp, phase);
                }
                events.push(EventInterval::new(EventKind::Spindle, e.time_s - dur / 2.0, e.time_s + dur / 2.0)?);
            }
            EventKind::KComplex => {
                let amp = rms * ev_rng.random_range(KCOMPLEX_AMPLITUDE_RMS.0..=KCOMPLEX_AMPLITUDE_RMS.1);
                for ch in eeg.iter_mut() {
                    add_kcomplex(ch, fs, e.time_s, amp);
                }
                let half = (KCOMPLEX_NEG_S + KCOMPLEX_POS_S) / 2.0;
                events.push(EventInterval::new(EventKind::KComplex, e.time_s - half, e.time_s + half)?);
            }
            EventKind::Movement => unreachable!("rejected by validate"),
        }
    }
    for ch in eeg.iter_mut() {
        for v in ch.iter_mut() {
            *v += EEG_LEVEL_V;
        }
    }

    let mut eog_rng = stream_rng(spec.seed, STREAM_EOG);
    let eog = std::array::from_fn(|_| {
        let phase = eog_rng.random_range(0.0..2.0 * PI);
        (0..n).map(|i| EOG_LEVEL_V + EOG_DRIFT_V * (2.0 * PI * EOG_DRIFT_HZ * i as f64 / fs + phase).sin()).collect()
    });
    Ok(EegOutput { eeg, eog, events, snr_db })
}
