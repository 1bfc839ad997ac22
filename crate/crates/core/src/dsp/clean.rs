//! Post-reception cleanup: gap interpolation, powerline notch, impulse
//! median and MAD outlier clamp; and segment-center linear upsampling.

use crate::error::{Error, Result};

use super::filter::{design_notch, filtfilt};

pub const POWERLINE_HZ: f64 = 60.0;
pub const NOTCH_Q: f64 = 30.0;
pub const MEDIAN_KERNEL: usize = 3;
pub const MAD_MULTIPLIER: f64 = 5.0;
pub const MAD_WINDOW_S: f64 = 1.0;

/// Fills NaN runs by linear interpolation between the nearest finite
/// neighbours; leading and trailing runs take the nearest finite value.
/// An all-NaN input is returned unchanged.
pub fn interpolate_gaps(x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    let finite: Vec<usize> = (0..x.len()).filter(|&i| !x[i].is_nan()).collect();
    let (Some(&first), Some(&last)) = (finite.first(), finite.last()) else {
        return y;
    };
    y[..first].fill(x[first]);
    y[last + 1..].fill(x[last]);
    for w in finite.windows(2) {
        let (a, b) = (w[0], w[1]);
        for (i, v) in y.iter_mut().enumerate().take(b).skip(a + 1) {
            let t = (i - a) as f64 / (b - a) as f64;
            *v = x[a] + t * (x[b] - x[a]);
        }
    }
    y
}

fn median_in_place(buf: &mut [f64]) -> f64 {
    let n = buf.len();
    let mid = n / 2;
    let (_, m, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *m;
    if n % 2 == 1 {
        upper
    } else {
        let lower = buf[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Sliding median with an odd kernel; the window shrinks symmetrically at the edges.
pub fn median_filter(x: &[f64], kernel: usize) -> Vec<f64> {
    let half = kernel / 2;
    let n = x.len();
    let mut buf = Vec::with_capacity(kernel);
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            buf.clear();
            buf.extend_from_slice(&x[i - h..=i + h]);
            median_in_place(&mut buf)
        })
        .collect()
}

/// Replaces samples further than `k` MADs from their centered rolling median.
pub fn clamp_outliers(x: &[f64], window: usize, k: f64) -> Vec<f64> {
    let n = x.len();
    let half = window / 2;
    let mut buf = Vec::with_capacity(window + 1);
    let mut out = x.to_vec();
    for i in 0..n {
        let (a, b) = (i.saturating_sub(half), (i + half + 1).min(n));
        buf.clear();
        buf.extend_from_slice(&x[a..b]);
        let med = median_in_place(&mut buf);
        for v in buf.iter_mut() {
            *v = (*v - med).abs();
        }
        let mad = median_in_place(&mut buf);
        if (x[i] - med).abs() > k * mad {
            out[i] = med;
        }
    }
    out
}

/// Post-reception cleanup chain: gap interpolation, 60 Hz notch (only when
/// the sampling rate places 60 Hz below Nyquist with room for the notch
/// band), 3-point median, then 5-MAD outlier clamp over a 1 s window.
/// All-NaN or very short inputs pass through the steps that cannot apply.
pub fn preprocess(x: &[f64], fs_hz: f64) -> Vec<f64> {
    let mut y = interpolate_gaps(x);
    if y.iter().any(|v| v.is_nan()) {
        return y;
    }
    if fs_hz > 120.0 {
        if let Ok(notch) = design_notch(POWERLINE_HZ, NOTCH_Q, fs_hz) {
            if let Ok(f) = filtfilt(&notch, &y) {
                y = f;
            }
        }
    }
    let y = median_filter(&y, MEDIAN_KERNEL);
    let window = ((MAD_WINDOW_S * fs_hz).round() as usize).max(MEDIAN_KERNEL);
    clamp_outliers(&y, window, MAD_MULTIPLIER)
}

/// Linear interpolation of `x` onto `0..target_len`, sample `i` anchored at
/// output position `centers[i]`. Outside the first and last anchor the
/// nearest anchor value is held.
pub fn upsample_linear(x: &[f64], target_len: usize, centers: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    if centers.len() != x.len() {
        return Err(Error::LengthMismatch(format!("{} values but {} centers", x.len(), centers.len())));
    }
    if target_len < x.len() {
        return Err(Error::InvalidArgument(format!("target length {target_len} below source length {}", x.len())));
    }
    if centers.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("anchor centers must be strictly increasing".into()));
    }
    let mut out = Vec::with_capacity(target_len);
    let mut k = 0;
    for t in 0..target_len {
        let t = t as f64;
        if t <= centers[0] {
            out.push(x[0]);
            continue;
        }
        while k + 1 < centers.len() && centers[k + 1] < t {
            k += 1;
        }
        if k + 1 == centers.len() {
            out.push(x[k]);
        } else {
            let frac = (t - centers[k]) / (centers[k + 1] - centers[k]);
            out.push(x[k] + frac * (x[k + 1] - x[k]));
        }
    }
    Ok(out)
}
