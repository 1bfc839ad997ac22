use crate::dsp::{design_butterworth_bandpass, filtfilt, interpolate_gaps};
use crate::error::{Error, Result};
use crate::spectral::periodogram;

use super::RateSeries;

pub const RESP_SEARCH_HZ: (f64, f64) = (0.1, 0.7);
pub const RESP_WINDOW_S: f64 = 60.0;
pub const RESP_STEP_S: f64 = 30.0;
pub const RESP_FILTER_ORDER: usize = 3;
const PASSBAND_FLOOR_HZ: f64 = 0.08;
const PROMINENCE_OF_STD: f64 = 0.5;

/// Local maxima with a minimum index spacing and minimum prominence.
/// Spacing is enforced first, highest peaks kept; prominence is measured
/// against the lowest point on each side before a higher sample.
pub fn find_peaks(x: &[f64], min_distance: usize, min_prominence: f64) -> Vec<usize> {
    let n = x.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i] > x[i - 1] {
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] {
                peaks.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    if min_distance > 1 && peaks.len() > 1 {
        let mut keep = vec![true; peaks.len()];
        let mut order: Vec<usize> = (0..peaks.len()).collect();
        order.sort_by(|&a, &b| x[peaks[b]].total_cmp(&x[peaks[a]]).then(b.cmp(&a)));
        for &k in &order {
            if !keep[k] {
                continue;
            }
            let mut j = k;
            while j > 0 && peaks[k] - peaks[j - 1] < min_distance {
                j -= 1;
                keep[j] = false;
            }
            let mut j = k + 1;
            while j < peaks.len() && peaks[j] - peaks[k] < min_distance {
                keep[j] = false;
                j += 1;
            }
        }
        peaks = peaks.into_iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| p).collect();
    }
    peaks.retain(|&p| prominence(x, p) >= min_prominence);
    peaks
}

fn prominence(x: &[f64], p: usize) -> f64 {
    let h = x[p];
    let mut left = h;
    for &v in x[..p].iter().rev() {
        if v > h {
            break;
        }
        left = left.min(v);
    }
    let mut right = h;
    for &v in &x[p + 1..] {
        if v > h {
            break;
        }
        right = right.min(v);
    }
    h - left.max(right)
}

fn std_pop(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Per-window result with the patch the breathing was read from.
#[derive(Debug, Clone, Default)]
pub struct RespirationSeries {
    pub rate: RateSeries,
    pub patch: Vec<Option<usize>>,
    pub peak_hz: Vec<f64>,
}

/// Breaths per minute over 60 s windows every 30 s. Each window picks the
/// patch with most 0.1-0.7 Hz power, band-passes it around the spectral
/// peak over the window plus 30 s either side, and counts peaks inside the
/// window. Quality is the peak bin's share of search-band power.
pub fn estimate_respiration(slow: [&[f64]; 3], fs_hz: f64) -> Result<RespirationSeries> {
    let n = slow[0].len();
    if slow.iter().any(|c| c.len() != n) {
        return Err(Error::LengthMismatch("respiration channels differ in length".into()));
    }
    let win = (RESP_WINDOW_S * fs_hz).round() as usize;
    let step = (RESP_STEP_S * fs_hz).round() as usize;
    let ext = (RESP_WINDOW_S / 2.0 * fs_hz).round() as usize;
    let filled: Vec<Vec<f64>> = slow.iter().map(|c| interpolate_gaps(c)).collect();
    let mut out = RespirationSeries::default();
    if n < win {
        return Ok(out);
    }
    for s in (0..=(n - win) / step).map(|k| k * step) {
        out.rate.times_s.push((s as f64 + win as f64 / 2.0) / fs_hz);
        let mut best: Option<(usize, f64, f64, f64)> = None;
        for (c, ch) in filled.iter().enumerate() {
            let seg = &ch[s..s + win];
            if seg.iter().any(|v| v.is_nan()) {
                continue;
            }
            let spec = periodogram(seg, fs_hz)?;
            let band = spec.band(RESP_SEARCH_HZ.0, RESP_SEARCH_HZ.1);
            let power: f64 = spec.power[band.clone()].iter().sum();
            if power > 0.0 && best.is_none_or(|b| power > b.1) {
                let f = spec.peak_in_band(RESP_SEARCH_HZ.0, RESP_SEARCH_HZ.1).unwrap_or(0.0);
                let peak = spec.power[band].iter().copied().fold(0.0, f64::max);
                best = Some((c, power, f, peak / power));
            }
        }
        let Some((c, _, f, q)) = best else {
            out.rate.values.push(f64::NAN);
            out.rate.quality.push(0.0);
            out.patch.push(None);
            out.peak_hz.push(f64::NAN);
            continue;
        };
        let a = s.saturating_sub(ext);
        let b = (s + win + ext).min(n);
        let lo = PASSBAND_FLOOR_HZ.max(0.6 * f);
        let hi = (1.4 * f).min(0.49 * fs_hz);
        let bp = design_butterworth_bandpass(RESP_FILTER_ORDER, lo, hi, fs_hz)?;
        let y = filtfilt(&bp, &filled[c][a..b])?;
        let inner = &y[s - a..s - a + win];
        let dist = ((0.5 / f) * fs_hz).floor().max(1.0) as usize;
        let count = find_peaks(&y, dist, PROMINENCE_OF_STD * std_pop(inner))
            .into_iter()
            .filter(|&p| p >= s - a && p < s - a + win)
            .count();
        out.rate.values.push(count as f64 * 60.0 / RESP_WINDOW_S);
        out.rate.quality.push(q);
        out.patch.push(Some(c));
        out.peak_hz.push(f);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    const FS: f64 = 125.0 / 3.0;

    #[test]
    fn peaks_match_hand_cases() {
        let x = [0.0, 2.0, 0.0, 1.0, 0.0, 3.0, 3.0, 0.0, 0.5, 0.4];
        assert_eq!(find_peaks(&x, 1, 0.0), vec![1, 3, 5, 8]);
        assert_eq!(find_peaks(&x, 3, 0.0), vec![1, 5, 8]);
        assert_eq!(find_peaks(&x, 1, 1.5), vec![1, 5]);
        assert!((prominence(&x, 3) - 1.0).abs() < 1e-12);
    }

    fn noisy_sine(rate_bpm: f64, seconds: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.7).unwrap();
        let n = (seconds * FS) as usize;
        (0..n).map(|i| (2.0 * PI * rate_bpm / 60.0 * i as f64 / FS).sin() + noise.sample(&mut rng)).collect()
    }

    #[test]
    fn constant_rate_and_patch_selection() {
        let p1 = noisy_sine(15.0, 300.0, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise = Normal::new(0.0, 0.2).unwrap();
        let p2: Vec<f64> = (0..p1.len()).map(|_| noise.sample(&mut rng)).collect();
        let p3: Vec<f64> = (0..p1.len()).map(|_| noise.sample(&mut rng)).collect();
        let r = estimate_respiration([&p1, &p2, &p3], FS).unwrap();
        assert_eq!(r.rate.values.len(), 9);
        assert!(r.rate.values.iter().all(|v| (v - 15.0).abs() <= 1.0), "{:?}", r.rate.values);
        assert!(r.patch.iter().all(|p| *p == Some(0)));
    }

    #[test]
    fn ramp_is_tracked() {
        // instantaneous rate 12 -> 18 breaths/min over 300 s
        let n = (300.0 * FS) as usize;
        let mut phase = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / FS;
                phase += 2.0 * PI * (12.0 + 6.0 * t / 300.0) / 60.0 / FS;
                phase.sin() + noise.sample(&mut rng)
            })
            .collect();
        let r = estimate_respiration([&x, &x, &x], FS).unwrap();
        for (t, v) in r.rate.times_s.iter().zip(&r.rate.values) {
            let truth = 12.0 + 6.0 * t / 300.0;
            assert!((v - truth).abs() <= 1.0 + 1e-9, "t={t} v={v} truth={truth}");
        }
        assert!(r.rate.values.windows(2).all(|w| w[1] >= w[0] - 1.0));
    }

    #[test]
    fn short_input_gives_no_points() {
        let x = vec![0.0; 100];
        assert!(estimate_respiration([&x, &x, &x], FS).unwrap().rate.values.is_empty());
    }
}
