use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Forward DFT of a real sequence (full length, unnormalized).
pub(crate) fn fft_real(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    if buf.is_empty() {
        return buf;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    fft.process(&mut buf);
    buf
}

/// One-sided power from a full DFT of length `n`, each bin scaled by `scale`
/// and interior bins doubled.
fn one_sided(spec: &[Complex64], scale: f64) -> Vec<f64> {
    let n = spec.len();
    let half = n / 2;
    (0..=half)
        .map(|k| {
            let p = spec[k].norm_sqr() * scale;
            if k == 0 || (n % 2 == 0 && k == half) {
                p
            } else {
                2.0 * p
            }
        })
        .collect()
}

fn demeaned(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - mean).collect()
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    pub freqs_hz: Vec<f64>,
    /// One-sided power per bin (V²); sums to the sample variance.
    pub power: Vec<f64>,
}

impl Spectrum {
    /// Indices of bins with `lo <= f <= hi`.
    pub fn band(&self, lo_hz: f64, hi_hz: f64) -> std::ops::Range<usize> {
        let a = self.freqs_hz.partition_point(|&f| f < lo_hz);
        let b = self.freqs_hz.partition_point(|&f| f <= hi_hz);
        a..b.max(a)
    }

    /// Frequency of the strongest bin inside `[lo, hi]`, if that band holds any power.
    pub fn peak_in_band(&self, lo_hz: f64, hi_hz: f64) -> Option<f64> {
        let r = self.band(lo_hz, hi_hz);
        let (k, p) = self.power[r.clone()].iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
        (*p > 0.0).then(|| self.freqs_hz[r.start + k])
    }
}

/// Mean-removed one-sided periodogram. A constant input gives an all-zero spectrum.
pub fn periodogram(x: &[f64], fs_hz: f64) -> Result<Spectrum> {
    if x.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: x.len() });
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::NanInput);
    }
    let n = x.len();
    let spec = fft_real(&demeaned(x));
    let mut power = one_sided(&spec, 1.0 / (n as f64 * n as f64));
    power[0] = 0.0;
    let freqs_hz = (0..power.len()).map(|k| k as f64 * fs_hz / n as f64).collect();
    Ok(Spectrum { freqs_hz, power })
}

/// Share of in-band power held by the strongest in-band bin, in `[0, 1]`.
/// Zero when the band carries no power. The periodogram is taken over the
/// whole input; both numerator and denominator are restricted to the band.
pub fn periodicity(x: &[f64], fs_hz: f64, band: (f64, f64)) -> f64 {
    let Ok(spec) = periodogram(x, fs_hz) else {
        return 0.0;
    };
    let r = spec.band(band.0, band.1);
    let total: f64 = spec.power[r.clone()].iter().sum();
    if !(total > 0.0) {
        return 0.0;
    }
    let max = spec.power[r].iter().copied().fold(0.0, f64::max);
    max / total
}

/// Time-frequency power map; `power[frame][bin]` in V².
#[derive(Debug, Clone)]
pub struct TimeFrequencyMap {
    /// Segment centers, seconds.
    pub times_s: Vec<f64>,
    pub freqs_hz: Vec<f64>,
    pub power: Vec<Vec<f64>>,
    pub fs_hz: f64,
    pub seg_len: usize,
    pub hop: usize,
}

impl TimeFrequencyMap {
    /// Segment centers in (fractional) sample index.
    pub fn center_samples(&self) -> Vec<f64> {
        (0..self.power.len()).map(|k| (k * self.hop) as f64 + (self.seg_len - 1) as f64 / 2.0).collect()
    }
}

fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Short-time power spectra with a periodic Hann window. Each segment is
/// demeaned, windowed and transformed; bins are scaled by `1 / (L Σw²)` so
/// a frame's total approximates the segment variance.
pub fn stft(x: &[f64], fs_hz: f64, seg_len: usize, hop: usize) -> Result<TimeFrequencyMap> {
    if seg_len == 0 || hop == 0 || hop > seg_len {
        return Err(invalid(format!("need 0 < hop <= seg_len, got hop={hop} seg_len={seg_len}")));
    }
    if seg_len > x.len() {
        return Err(Error::TooShort { needed: seg_len, got: x.len() });
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::NanInput);
    }
    let win = hann_periodic(seg_len);
    let wss: f64 = win.iter().map(|w| w * w).sum();
    let scale = 1.0 / (seg_len as f64 * wss);
    let frames = (x.len() - seg_len) / hop + 1;
    let mut power = Vec::with_capacity(frames);
    let mut seg = vec![0.0; seg_len];
    for k in 0..frames {
        let s = &x[k * hop..k * hop + seg_len];
        let mean = s.iter().sum::<f64>() / seg_len as f64;
        for ((o, v), w) in seg.iter_mut().zip(s).zip(&win) {
            *o = (v - mean) * w;
        }
        let mut p = one_sided(&fft_real(&seg), scale);
        p[0] = 0.0;
        power.push(p);
    }
    let bins = seg_len / 2 + 1;
    let freqs_hz = (0..bins).map(|k| k as f64 * fs_hz / seg_len as f64).collect();
    let times_s = (0..frames).map(|k| ((k * hop) as f64 + (seg_len - 1) as f64 / 2.0) / fs_hz).collect();
    Ok(TimeFrequencyMap { times_s, freqs_hz, power, fs_hz, seg_len, hop })
}

/// Per-frame sum of bins with `lo <= f <= hi`.
pub fn band_power_series(tf: &TimeFrequencyMap, lo_hz: f64, hi_hz: f64) -> Result<Vec<f64>> {
    if !(lo_hz < hi_hz) {
        return Err(invalid(format!("band needs lo < hi, got [{lo_hz}, {hi_hz}]")));
    }
    if lo_hz < 0.0 || hi_hz > tf.fs_hz / 2.0 {
        return Err(invalid(format!("band [{lo_hz}, {hi_hz}] Hz outside [0, fs/2]")));
    }
    let a = tf.freqs_hz.partition_point(|&f| f < lo_hz);
    let b = tf.freqs_hz.partition_point(|&f| f <= hi_hz);
    Ok(tf.power.iter().map(|p| p[a..b.max(a)].iter().sum()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sine(f: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect()
    }

    fn variance(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
    }

    /// O(n²) DFT as an independent reference.
    fn naive_power(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let m = x.iter().sum::<f64>() / n as f64;
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, v) in x.iter().enumerate() {
                    let a = -2.0 * PI * (k * i) as f64 / n as f64;
                    re += (v - m) * a.cos();
                    im += (v - m) * a.sin();
                }
                let p = (re * re + im * im) / (n * n) as f64;
                if k == 0 || (n % 2 == 0 && k == n / 2) {
                    p
                } else {
                    2.0 * p
                }
            })
            .collect()
    }

    #[test]
    fn periodogram_matches_naive_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2usize, 7, 64, 125] {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = periodogram(&x, 125.0).unwrap();
            for (a, b) in p.power.iter().zip(naive_power(&x)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn periodogram_cases() {
        let z = periodogram(&[0.0; 100], 10.0).unwrap();
        assert!(z.power.iter().all(|&p| p == 0.0));
        let x = sine(5.0, 125.0, 250);
        let p = periodogram(&x, 125.0).unwrap();
        let total: f64 = p.power.iter().sum();
        let max = p.power.iter().copied().fold(0.0, f64::max);
        assert!(max / total >= 0.99);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w: Vec<f64> = (0..1001).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s: f64 = periodogram(&w, 125.0).unwrap().power.iter().sum();
        assert!((s - variance(&w)).abs() / variance(&w) < 1e-6);
        assert!(periodogram(&[1.0], 1.0).is_err());
    }

    #[test]
    fn stft_frame_count_and_stationarity() {
        let x = sine(11.0, 125.0, 3750);
        let tf = stft(&x, 125.0, 64, 16).unwrap();
        assert_eq!(tf.power.len(), 231);
        let b = band_power_series(&tf, 9.0, 16.0).unwrap();
        let mean = b.iter().sum::<f64>() / b.len() as f64;
        assert!(b.iter().all(|v| (v - mean).abs() / mean < 0.10));
        assert!(tf.power.iter().flatten().all(|&p| p >= 0.0));
        assert!(tf.times_s.windows(2).all(|w| w[1] > w[0]));
        assert!(stft(&x[..10], 125.0, 64, 16).is_err());
    }

    #[test]
    fn chirp_peak_is_monotone() {
        let fs = 125.0;
        let n = 3750;
        let dur = n as f64 / fs;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                (2.0 * PI * (5.0 * t + 0.5 * (15.0 / dur) * t * t)).sin()
            })
            .collect();
        let tf = stft(&x, fs, 64, 16).unwrap();
        let peaks: Vec<f64> = tf
            .power
            .iter()
            .map(|p| {
                let k = (0..p.len()).max_by(|a, b| p[*a].total_cmp(&p[*b])).unwrap();
                tf.freqs_hz[k]
            })
            .collect();
        assert!(peaks.windows(2).all(|w| w[1] >= w[0]), "{peaks:?}");
    }

    #[test]
    fn band_power_cases() {
        let x = sine(11.0, 125.0, 3750);
        let tf = stft(&x, 125.0, 256, 64).unwrap();
        let total = band_power_series(&tf, 0.0, 62.5).unwrap();
        for (t, p) in total.iter().zip(&tf.power) {
            assert!((t - p.iter().sum::<f64>()).abs() < 1e-12);
        }
        let core = band_power_series(&tf, 10.0, 12.0).unwrap();
        let far = band_power_series(&tf, 40.0, 50.0).unwrap();
        for ((c, f), t) in core.iter().zip(&far).zip(&total) {
            assert!(c / t >= 0.8);
            assert!(f / t < 0.01);
        }
        assert!(band_power_series(&tf, 40.0, 70.0).is_err());
        assert!(band_power_series(&tf, 12.0, 10.0).is_err());
    }

    #[test]
    fn stft_homogeneity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = 3.7;
        let y: Vec<f64> = x.iter().map(|v| a * v).collect();
        let (tx, ty) = (stft(&x, 125.0, 64, 16).unwrap(), stft(&y, 125.0, 64, 16).unwrap());
        for (px, py) in tx.power.iter().flatten().zip(ty.power.iter().flatten()) {
            assert!((py - a * a * px).abs() <= 1e-9 * (a * a * px).abs().max(1e-300));
        }
    }

    #[test]
    fn periodicity_cases() {
        let x = sine(1.2, 125.0, 3750);
        assert!(periodicity(&x, 125.0, (0.75, 3.0)) >= 0.8);
        assert_eq!(periodicity(&[0.0; 3750], 125.0, (0.75, 3.0)), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w: Vec<f64> = (0..3750).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = periodicity(&w, 125.0, (0.75, 3.0));
        for a in [2.0, -0.5, 1024.0, -1.0] {
            let s: Vec<f64> = w.iter().map(|v| a * v).collect();
            assert_eq!(periodicity(&s, 125.0, (0.75, 3.0)), p);
        }
        let s: Vec<f64> = w.iter().map(|v| 0.37 * v).collect();
        assert!((periodicity(&s, 125.0, (0.75, 3.0)) - p).abs() < 1e-12);
    }

    #[test]
    fn white_noise_has_low_periodicity() {
        let mut low = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let w: Vec<f64> = (0..3750).map(|_| rng.random_range(-1.0..1.0)).collect();
            if periodicity(&w, 125.0, (0.75, 3.0)) <= 0.2 {
                low += 1;
            }
        }
        assert!(low >= 95);
    }
}
