use std::str::FromStr;

use crate::dsp::{design_butterworth_bandpass, filtfilt, interpolate_gaps, BUTTERWORTH_ORDER};
use crate::error::{invalid, Error, Result};
use crate::spectral::{periodicity, periodogram};

use super::pca::pca3;
use super::RateSeries;

pub const PULSE_BAND_HZ: (f64, f64) = (0.75, 3.0);
pub const HR_WINDOW_S: f64 = 30.0;
pub const HR_HOP_S: f64 = 10.0;

/// Which series the pulse frequency is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HrMode {
    /// Most periodic principal component of the three patches.
    Full,
    /// Most periodic raw (filtered) patch, no decomposition.
    NoPcaBest,
    /// A fixed patch, 0-based.
    NoPcaPressed(usize),
}

impl FromStr for HrMode {
    type Err = Error;

    /// Parses `full` and `no-pca-best`; `no-pca-pressed` needs the patch
    /// chosen separately, so it parses to patch 0.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(HrMode::Full),
            "no-pca-best" => Ok(HrMode::NoPcaBest),
            "no-pca-pressed" => Ok(HrMode::NoPcaPressed(0)),
            other => Err(invalid(format!("unknown heart-rate mode {other:?}"))),
        }
    }
}

fn window_bounds(n: usize, win: usize, hop: usize) -> Vec<usize> {
    if n < win {
        return Vec::new();
    }
    (0..=(n - win) / hop).map(|k| k * hop).collect()
}

/// Frequency of the strongest pulse-band bin, with the periodicity score.
fn pulse_peak(x: &[f64], fs_hz: f64) -> (Option<f64>, f64) {
    let score = periodicity(x, fs_hz, PULSE_BAND_HZ);
    if score <= 0.0 {
        return (None, 0.0);
    }
    let f = periodogram(x, fs_hz).ok().and_then(|p| p.peak_in_band(PULSE_BAND_HZ.0, PULSE_BAND_HZ.1));
    (f, score)
}

/// Pulse rate over 30 s windows every 10 s. The three channels are
/// band-passed 0.75-3 Hz once over the whole record; each window then
/// picks its series per `mode`. Times are window centers.
pub fn estimate_heart_rate(bcg: [&[f64]; 3], fs_hz: f64, mode: HrMode) -> Result<RateSeries> {
    let n = bcg[0].len();
    if bcg.iter().any(|c| c.len() != n) {
        return Err(Error::LengthMismatch("BCG channels differ in length".into()));
    }
    if let HrMode::NoPcaPressed(p) = mode {
        if p > 2 {
            return Err(invalid(format!("patch index {p} out of range")));
        }
    }
    let win = (HR_WINDOW_S * fs_hz).round() as usize;
    let hop = (HR_HOP_S * fs_hz).round() as usize;
    if n < win {
        return Err(Error::TooShort { needed: win, got: n });
    }
    let spec = design_butterworth_bandpass(BUTTERWORTH_ORDER, PULSE_BAND_HZ.0, PULSE_BAND_HZ.1, fs_hz)?;
    let mut valid = [Vec::new(), Vec::new(), Vec::new()];
    let filtered: Vec<Vec<f64>> = bcg
        .iter()
        .enumerate()
        .map(|(c, x)| {
            valid[c] = x.iter().map(|v| !v.is_nan()).collect();
            let filled = interpolate_gaps(x);
            if filled.iter().any(|v| v.is_nan()) {
                Ok(vec![0.0; n])
            } else {
                filtfilt(&spec, &filled)
            }
        })
        .collect::<Result<_>>()?;

    let mut out = RateSeries::default();
    for s in window_bounds(n, win, hop) {
        out.times_s.push((s as f64 + win as f64 / 2.0) / fs_hz);
        let live: Vec<bool> = (0..3).map(|c| valid[c][s..s + win].iter().any(|&v| v)).collect();
        if live.iter().all(|l| !l) {
            out.values.push(f64::NAN);
            out.quality.push(0.0);
            continue;
        }
        let seg: [&[f64]; 3] = std::array::from_fn(|c| &filtered[c][s..s + win]);
        let (f, q) = match mode {
            HrMode::Full => {
                let d = pca3(seg)?;
                best_of(d.components.iter().map(|c| c.as_slice()), fs_hz)
            }
            HrMode::NoPcaBest => best_of(seg.into_iter(), fs_hz),
            HrMode::NoPcaPressed(p) => pulse_peak(seg[p], fs_hz),
        };
        match f {
            Some(f) => {
                out.values.push(60.0 * f);
                out.quality.push(q);
            }
            None => {
                out.values.push(f64::NAN);
                out.quality.push(0.0);
            }
        }
    }
    Ok(out)
}

fn best_of<'a>(series: impl Iterator<Item = &'a [f64]>, fs_hz: f64) -> (Option<f64>, f64) {
    let mut best: Option<&[f64]> = None;
    let mut best_score = -1.0;
    for s in series {
        let score = periodicity(s, fs_hz, PULSE_BAND_HZ);
        if score > best_score {
            best_score = score;
            best = Some(s);
        }
    }
    match best {
        Some(s) => pulse_peak(s, fs_hz),
        None => (None, 0.0),
    }
}
