use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recording::{EventInterval, EventKind, Recording};

pub const CALIBRATION_MIN_S: f64 = 30.0;
pub const POSTURE_BLOCK_S: f64 = 10.0;
pub const POSTURE_THRESHOLD_V: f64 = 0.05;
pub const MOVEMENT_BLOCK_S: f64 = 2.0;
pub const MOVEMENT_HOP_S: f64 = 1.0;
pub const MOVEMENT_RATIO: f64 = 5.0;
pub const MAJOR_MOVEMENT_RATIO: f64 = 25.0;

/// Seated, unloaded reference levels of the three pressure patches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineCalibration {
    pub v_p0_seated: [f64; 3],
    /// Mean of the 2 s block variances over the calibration record (V²).
    pub stationary_variance: [f64; 3],
}

impl BaselineCalibration {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let c: Self = serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::Malformed { path: path.to_path_buf(), reason: e.to_string() })?;
        if c.v_p0_seated.iter().chain(&c.stationary_variance).any(|v| !v.is_finite()) {
            return Err(Error::Malformed { path: path.to_path_buf(), reason: "non-finite calibration value".into() });
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Posture {
    Back,
    Left,
    Right,
    Indeterminate,
}

impl Posture {
    /// Lying posture that loads patch `p` (P1 back, P2 left, P3 right).
    pub fn for_patch(p: usize) -> Posture {
        match p {
            0 => Posture::Back,
            1 => Posture::Left,
            2 => Posture::Right,
            _ => Posture::Indeterminate,
        }
    }

    pub fn pressed_patch(self) -> Option<usize> {
        match self {
            Posture::Back => Some(0),
            Posture::Left => Some(1),
            Posture::Right => Some(2),
            Posture::Indeterminate => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Posture::Back => "back",
            Posture::Left => "left",
            Posture::Right => "right",
            Posture::Indeterminate => "indeterminate",
        }
    }
}

/// Mean and population variance of the finite samples, accumulated relative
/// to the first one so constant input gives exactly its value and zero.
fn nan_moments(x: &[f64]) -> (f64, f64) {
    let Some(&x0) = x.iter().find(|v| !v.is_nan()) else {
        return (f64::NAN, f64::NAN);
    };
    let (mut s, mut ss, mut n) = (0.0, 0.0, 0usize);
    for v in x.iter().filter(|v| !v.is_nan()) {
        let d = v - x0;
        s += d;
        ss += d * d;
        n += 1;
    }
    let m = s / n as f64;
    (x0 + m, (ss / n as f64 - m * m).max(0.0))
}

fn nan_mean(x: &[f64]) -> f64 {
    nan_moments(x).0
}

fn nan_var(x: &[f64]) -> f64 {
    nan_moments(x).1
}

/// Sample range `[ceil(a fs), ceil(b fs))` clipped to `n`.
fn span(a_s: f64, b_s: f64, fs: f64, n: usize) -> (usize, usize) {
    let i = ((a_s * fs - 1e-9).ceil().max(0.0) as usize).min(n);
    let j = ((b_s * fs - 1e-9).ceil().max(0.0) as usize).min(n);
    (i, j)
}

/// Per-patch 2 s block variances, blocks every 1 s; `(center_s, [var; 3])`.
fn block_variances(rec: &Recording) -> Vec<(f64, [f64; 3])> {
    let fs = rec.slow_rate_hz();
    let n = rec.slow_len();
    let dur = n as f64 / fs;
    let resp = rec.resp();
    let mut out = Vec::new();
    let mut k = 0usize;
    while k as f64 * MOVEMENT_HOP_S + MOVEMENT_BLOCK_S <= dur + 1e-9 {
        let a = k as f64 * MOVEMENT_HOP_S;
        let (i, j) = span(a, a + MOVEMENT_BLOCK_S, fs, n);
        out.push((a + MOVEMENT_BLOCK_S / 2.0, std::array::from_fn(|p| nan_var(&resp[p][i..j]))));
        k += 1;
    }
    out
}

/// Reference levels from a calm seated record of at least 30 s.
pub fn calibrate_seated_baseline(rec: &Recording) -> Result<BaselineCalibration> {
    let dur = rec.slow_len() as f64 / rec.slow_rate_hz();
    if dur + 1e-9 < CALIBRATION_MIN_S {
        let needed = (CALIBRATION_MIN_S * rec.slow_rate_hz()).ceil() as usize;
        return Err(Error::TooShort { needed, got: rec.slow_len() });
    }
    let resp = rec.resp();
    let v_p0_seated: [f64; 3] = std::array::from_fn(|p| nan_mean(resp[p]));
    let blocks = block_variances(rec);
    let stationary_variance: [f64; 3] = std::array::from_fn(|p| {
        let v: Vec<f64> = blocks.iter().map(|b| b.1[p]).filter(|v| !v.is_nan()).collect();
        v.iter().sum::<f64>() / v.len() as f64
    });
    if v_p0_seated.iter().chain(&stationary_variance).any(|v| !v.is_finite()) {
        return Err(Error::NanInput);
    }
    Ok(BaselineCalibration { v_p0_seated, stationary_variance })
}

/// Posture from the block-mean drop of each patch below its seated level.
pub fn posture_from_drops(delta_v: [f64; 3]) -> Posture {
    let mut best = 0;
    for p in 1..3 {
        if delta_v[p] > delta_v[best] {
            best = p;
        }
    }
    if delta_v[best] >= POSTURE_THRESHOLD_V {
        Posture::for_patch(best)
    } else {
        Posture::Indeterminate
    }
}

/// One posture per full 10 s block, stamped at the block center.
pub fn classify_posture(rec: &Recording, calib: &BaselineCalibration) -> Vec<(f64, Posture)> {
    let fs = rec.slow_rate_hz();
    let n = rec.slow_len();
    let blocks = ((n as f64 / fs + 1e-9) / POSTURE_BLOCK_S).floor() as usize;
    let resp = rec.resp();
    (0..blocks)
        .map(|k| {
            let a = k as f64 * POSTURE_BLOCK_S;
            let (i, j) = span(a, a + POSTURE_BLOCK_S, fs, n);
            let drops: [f64; 3] = std::array::from_fn(|p| calib.v_p0_seated[p] - nan_mean(&resp[p][i..j]));
            let posture =
                if drops.iter().any(|d| d.is_nan()) { Posture::Indeterminate } else { posture_from_drops(drops) };
            (a + POSTURE_BLOCK_S / 2.0, posture)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Minor,
    Major,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MovementEvent {
    pub interval: EventInterval,
    pub severity: Severity,
    /// Largest block-variance ratio inside the run.
    pub peak_ratio: f64,
}

/// Largest per-patch ratio of block variance to stationary variance.
fn block_ratio(vars: &[f64; 3], calib: &BaselineCalibration) -> f64 {
    (0..3)
        .map(|p| {
            let v = vars[p];
            let s = calib.stationary_variance[p];
            if v.is_nan() {
                0.0
            } else if s > 0.0 {
                v / s
            } else if v > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// Runs of 2 s blocks whose variance reaches 5x the stationary level on
/// any patch. A run spans half a hop either side of its first and last
/// block centers; it is Major when any block reaches 25x.
pub fn detect_movement(rec: &Recording, calib: &BaselineCalibration) -> Result<Vec<MovementEvent>> {
    let mut out = Vec::new();
    let mut run: Option<(f64, f64, f64)> = None;
    let blocks = block_variances(rec);
    let flush = |run: (f64, f64, f64), out: &mut Vec<MovementEvent>| -> Result<()> {
        let (first, last, peak) = run;
        let interval = EventInterval::new(
            EventKind::Movement,
            (first - MOVEMENT_HOP_S / 2.0).max(0.0),
            last + MOVEMENT_HOP_S / 2.0,
        )?;
        let severity = if peak >= MAJOR_MOVEMENT_RATIO { Severity::Major } else { Severity::Minor };
        out.push(MovementEvent { interval, severity, peak_ratio: peak });
        Ok(())
    };
    for (center, vars) in &blocks {
        let r = block_ratio(vars, calib);
        if r >= MOVEMENT_RATIO {
            run = Some(match run {
                Some((first, _, peak)) => (first, *center, peak.max(r)),
                None => (*center, *center, r),
            });
        } else if let Some(done) = run.take() {
            flush(done, &mut out)?;
        }
    }
    if let Some(done) = run {
        flush(done, &mut out)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recording::default_start_time;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn rec_from_slow(slow: [Vec<f64>; 3]) -> Recording {
        let fast_len = slow[0].len() * 3;
        let fast = std::array::from_fn(|_| vec![1.65; fast_len]);
        Recording::new(fast, slow, default_start_time()).unwrap()
    }

    fn noisy(level: f64, n: usize, sd: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let d = Normal::new(0.0, sd).unwrap();
        (0..n).map(|_| level + d.sample(rng)).collect()
    }

    #[test]
    fn calibration_cases() {
        let n = 1250;
        let c = calibrate_seated_baseline(&rec_from_slow([vec![1.5; n], vec![1.6; n], vec![1.7; n]])).unwrap();
        assert_eq!(c.stationary_variance, [0.0; 3]);
        assert!((c.v_p0_seated[1] - 1.6).abs() < 1e-12);
        let short = 29 * 125 / 3;
        assert!(
            calibrate_seated_baseline(&rec_from_slow([vec![1.5; short], vec![1.6; short], vec![1.7; short]])).is_err()
        );
    }

    #[test]
    fn posture_rules() {
        assert_eq!(posture_from_drops([0.3, 0.0, 0.01]), Posture::Back);
        assert_eq!(posture_from_drops([0.01, 0.02, 0.0]), Posture::Indeterminate);
        assert_eq!(posture_from_drops([0.1, 0.2, 0.2]), Posture::Left);
        assert_eq!(posture_from_drops([0.3, 0.3, 0.3]), Posture::Back);
    }

    #[test]
    fn back_posture_and_offset_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 2500;
        let seated = rec_from_slow([
            noisy(1.7, n, 0.005, &mut rng),
            noisy(1.7, n, 0.005, &mut rng),
            noisy(1.7, n, 0.005, &mut rng),
        ]);
        let calib = calibrate_seated_baseline(&seated).unwrap();
        let lying = rec_from_slow([
            noisy(1.4, n, 0.005, &mut rng),
            noisy(1.7, n, 0.005, &mut rng),
            noisy(1.7, n, 0.005, &mut rng),
        ]);
        let p = classify_posture(&lying, &calib);
        assert_eq!(p.len(), 6);
        assert!(p.iter().all(|(_, q)| *q == Posture::Back));
        let shift =
            |r: &Recording| rec_from_slow(std::array::from_fn(|c| r.resp()[c].iter().map(|v| v + 0.2).collect()));
        let calib2 = calibrate_seated_baseline(&shift(&seated)).unwrap();
        assert_eq!(classify_posture(&shift(&lying), &calib2), p);
    }

    #[test]
    fn movement_burst_and_severity() {
        let fs = 125.0 / 3.0;
        let n = (60.0 * fs) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base: [Vec<f64>; 3] = std::array::from_fn(|_| noisy(1.6, n, 0.01, &mut rng));
        let calib = calibrate_seated_baseline(&rec_from_slow(base.clone())).unwrap();
        assert!(detect_movement(&rec_from_slow(base.clone()), &calib).unwrap().is_empty());
        for (ratio, expect) in [(30.0, Severity::Major), (8.0, Severity::Minor)] {
            let mut slow = base.clone();
            let burst = Normal::new(0.0, (ratio * calib.stationary_variance[1]).sqrt()).unwrap();
            let (i, j) = span(20.0, 23.0, fs, n);
            for v in &mut slow[1][i..j] {
                *v += burst.sample(&mut rng);
            }
            let ev = detect_movement(&rec_from_slow(slow), &calib).unwrap();
            assert_eq!(ev.len(), 1, "{ev:?}");
            let e = &ev[0];
            assert_eq!(e.severity, expect);
            let inter = e.interval.overlap(20.0, 23.0);
            let iou = inter / (e.interval.duration() + 3.0 - inter);
            assert!(iou >= 0.6, "{iou}");
        }
    }
}
