//! IIR filter design and zero-phase application.
//!
//! Band-pass filters come from an analog Butterworth prototype moved to the
//! band with the usual low-pass to band-pass substitution, then mapped to the
//! z-plane with a pre-warped bilinear transform. An order-`n` prototype gives
//! `2n` poles, realized as `n` second-order sections with zeros at z = ±1.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{invalid, Error, Result};

/// One biquad, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sos {
    pub b: [f64; 3],
    pub a1: f64,
    pub a2: f64,
}

impl Sos {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        let num = self.b[0] + z_inv * self.b[1] + z2 * self.b[2];
        let den = 1.0 + z_inv * self.a1 + z2 * self.a2;
        num / den
    }

    /// Both poles of the section.
    pub fn poles(&self) -> [Complex64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }

    /// Steady-state transposed direct-form II state for a unit step input.
    fn step_state(&self) -> [f64; 2] {
        let gain = self.b.iter().sum::<f64>() / (1.0 + self.a1 + self.a2);
        let z2 = self.b[2] - self.a2 * gain;
        let z1 = self.b[1] - self.a1 * gain + z2;
        [z1, z2]
    }

    fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / (1.0 + self.a1 + self.a2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Bandpass,
    Notch,
}

/// A designed digital filter as a cascade of second-order sections.
#[derive(Debug, Clone)]
pub struct FilterSpec {
    pub kind: FilterKind,
    /// Analog prototype order (2 for a notch).
    pub order: usize,
    pub passband_lo_hz: f64,
    pub passband_hi_hz: f64,
    pub fs_hz: f64,
    pub sections: Vec<Sos>,
}

impl FilterSpec {
    /// Complex frequency response of the cascade at `f_hz`.
    pub fn response(&self, f_hz: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * f_hz / self.fs_hz);
        self.sections.iter().map(|s| s.response(z_inv)).product()
    }

    pub fn magnitude(&self, f_hz: f64) -> f64 {
        self.response(f_hz).norm()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(|s| s.poles()).collect()
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }

    /// Edge padding used by [`filtfilt`], and one less than the minimum input length.
    pub fn pad_len(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }
}

fn check_band(lo_hz: f64, hi_hz: f64, fs_hz: f64) -> Result<()> {
    if !(fs_hz.is_finite() && fs_hz > 0.0) {
        return Err(invalid("sampling rate must be positive"));
    }
    if !(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < fs_hz / 2.0) {
        return Err(invalid(format!(
            "band edges must satisfy 0 < lo < hi < fs/2, got lo={lo_hz} hi={hi_hz} fs={fs_hz}"
        )));
    }
    Ok(())
}

fn bilinear(s: Complex64, fs_hz: f64) -> Complex64 {
    let k = 2.0 * fs_hz;
    (k + s) / (k - s)
}

fn section_from_poles(p1: Complex64, p2: Complex64) -> Sos {
    // p1, p2 are either a conjugate pair or both real.
    let sum = p1 + p2;
    let prod = p1 * p2;
    Sos { b: [1.0, 0.0, -1.0], a1: -sum.re, a2: prod.re }
}

/// Butterworth band-pass of analog prototype order `order`.
pub fn design_butterworth_bandpass(order: usize, lo_hz: f64, hi_hz: f64, fs_hz: f64) -> Result<FilterSpec> {
    if order < 1 {
        return Err(invalid("filter order must be at least 1"));
    }
    check_band(lo_hz, hi_hz, fs_hz)?;
    let warp = |f: f64| 2.0 * fs_hz * (PI * f / fs_hz).tan();
    let (w1, w2) = (warp(lo_hz), warp(hi_hz));
    let w0 = (w1 * w2).sqrt();
    let bw = w2 - w1;

    let mut sections = Vec::with_capacity(order);
    for k in 0..order {
        let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let proto = Complex64::from_polar(1.0, theta);
        if proto.im < -1e-12 {
            continue; // conjugate of an upper-half-plane pole already handled
        }
        let half = proto * (bw / 2.0);
        let root = (half * half - w0 * w0).sqrt();
        let (s1, s2) = (half + root, half - root);
        if proto.im.abs() <= 1e-12 {
            let (z1, z2) = (bilinear(s1, fs_hz), bilinear(s2, fs_hz));
            sections.push(section_from_poles(z1, z2));
        } else {
            for s in [s1, s2] {
                let z = bilinear(s, fs_hz);
                sections.push(section_from_poles(z, z.conj()));
            }
        }
    }

    // Unit gain at the image of the analog center frequency, section by section.
    let fc = fs_hz / PI * (w0 / (2.0 * fs_hz)).atan();
    let z_inv = Complex64::from_polar(1.0, -2.0 * PI * fc / fs_hz);
    for s in &mut sections {
        let g = s.response(z_inv).norm();
        for b in &mut s.b {
            *b /= g;
        }
    }

    Ok(FilterSpec { kind: FilterKind::Bandpass, order, passband_lo_hz: lo_hz, passband_hi_hz: hi_hz, fs_hz, sections })
}

/// Second-order IIR notch at `f0_hz` with quality factor `q` (-3 dB width `f0/q`).
pub fn design_notch(f0_hz: f64, q: f64, fs_hz: f64) -> Result<FilterSpec> {
    if !(q > 0.0) {
        return Err(invalid("notch Q must be positive"));
    }
    let half_bw = f0_hz / q / 2.0;
    check_band(f0_hz - half_bw, f0_hz + half_bw, fs_hz)?;
    let w0 = 2.0 * PI * f0_hz / fs_hz;
    let beta = (w0 / q / 2.0).tan();
    let gain = 1.0 / (1.0 + beta);
    let sos = Sos { b: [gain, -2.0 * gain * w0.cos(), gain], a1: -2.0 * gain * w0.cos(), a2: 2.0 * gain - 1.0 };
    Ok(FilterSpec {
        kind: FilterKind::Notch,
        order: 2,
        passband_lo_hz: f0_hz - half_bw,
        passband_hi_hz: f0_hz + half_bw,
        fs_hz,
        sections: vec![sos],
    })
}

/// Causal cascade with optional initial state per section.
fn sosfilt(sections: &[Sos], x: &mut [f64], init: Option<f64>) {
    let mut scale = 1.0;
    for s in sections {
        let mut z = match init {
            Some(x0) => {
                let st = s.step_state();
                [st[0] * scale * x0, st[1] * scale * x0]
            }
            None => [0.0, 0.0],
        };
        scale *= s.dc_gain();
        for v in x.iter_mut() {
            let xin = *v;
            let y = s.b[0] * xin + z[0];
            z[0] = s.b[1] * xin - s.a1 * y + z[1];
            z[1] = s.b[2] * xin - s.a2 * y;
            *v = y;
        }
    }
}

fn forward_backward(spec: &FilterSpec, x: &[f64]) -> Vec<f64> {
    let pad = spec.pad_len();
    let n = x.len();
    let (first, last) = (x[0], x[n - 1]);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));

    let x0 = ext[0];
    sosfilt(&spec.sections, &mut ext, Some(x0));
    ext.reverse();
    let y0 = ext[0];
    sosfilt(&spec.sections, &mut ext, Some(y0));
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Zero-phase filtering.
///
/// Runs forward-backward with odd-reflection padding and step-response
/// initial conditions, once on `x` and once on `x` reversed, and averages
/// the two. The average makes the result exactly equivariant under time
/// reversal instead of only approximately so near the edges.
pub fn filtfilt(spec: &FilterSpec, x: &[f64]) -> Result<Vec<f64>> {
    let pad = spec.pad_len();
    if x.len() <= pad {
        return Err(Error::TooShort { needed: pad + 1, got: x.len() });
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::NanInput);
    }
    let a = forward_backward(spec, x);
    let rev: Vec<f64> = x.iter().rev().copied().collect();
    let b = forward_backward(spec, &rev);
    Ok(a.iter().zip(b.iter().rev()).map(|(p, q)| 0.5 * (p + q)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(f: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect()
    }

    /// Direct polynomial evaluation of the analog prototype, independent of
    /// the section factorization.
    fn analog_bandpass_mag(order: usize, lo: f64, hi: f64, fs: f64, f: f64) -> f64 {
        let warp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
        let (w1, w2, w) = (warp(lo), warp(hi), warp(f));
        let x = (w * w - w1 * w2) / (w * (w2 - w1));
        1.0 / (1.0 + x.powi(2 * order as i32)).sqrt()
    }

    #[test]
    fn hr_band_response_points() {
        let f = design_butterworth_bandpass(5, 0.75, 3.0, 125.0).unwrap();
        assert_eq!(f.sections.len(), 5);
        assert!((f.magnitude(1.5) - 1.0).abs() < 0.01);
        assert!((f.magnitude(0.75) - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.02);
        assert!((f.magnitude(3.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.02);
        assert!(f.is_stable());
    }

    #[test]
    fn matches_analog_prototype_everywhere() {
        for (order, lo, hi) in [(5, 0.5, 35.0), (5, 0.75, 3.0), (3, 0.15, 0.35), (1, 2.0, 8.0), (4, 10.0, 20.0)] {
            let f = design_butterworth_bandpass(order, lo, hi, 125.0).unwrap();
            assert!(f.is_stable());
            for k in 1..600 {
                let freq = k as f64 * 0.1;
                let want = analog_bandpass_mag(order, lo, hi, 125.0, freq);
                assert!((f.magnitude(freq) - want).abs() < 1e-6, "order {order} f {freq}");
            }
        }
    }

    #[test]
    fn rejects_bad_band() {
        assert!(design_butterworth_bandpass(5, 1.0, 1.0, 125.0).is_err());
        assert!(design_butterworth_bandpass(5, 2.0, 1.0, 125.0).is_err());
        assert!(design_butterworth_bandpass(5, 1.0, 70.0, 125.0).is_err());
        assert!(design_butterworth_bandpass(0, 1.0, 3.0, 125.0).is_err());
    }

    #[test]
    fn notch_kills_center() {
        let n = design_notch(60.0, 30.0, 125.0).unwrap();
        assert!(n.magnitude(60.0) < 1e-9);
        assert!((n.magnitude(10.0) - 1.0).abs() < 1e-3);
        assert!(n.magnitude(55.0) > 0.95);
        assert!(n.magnitude(59.5) < 0.9);
        assert!(n.is_stable());
    }

    #[test]
    fn dc_is_rejected() {
        let f = design_butterworth_bandpass(5, 0.75, 3.0, 125.0).unwrap();
        let y = filtfilt(&f, &vec![2.5; 7500]).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1e-3 * 2.5));
    }

    #[test]
    fn passband_sine_keeps_amplitude_and_phase() {
        let f = design_butterworth_bandpass(5, 0.75, 3.0, 125.0).unwrap();
        let x = sine(1.5, 125.0, 7500);
        let y = filtfilt(&f, &x).unwrap();
        let mid = &y[625..6875];
        let peak = mid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 1.0).abs() < 0.02, "peak {peak}");
        // cross-correlation peaks at zero lag
        let xc = |lag: isize| -> f64 { (625..6875).map(|i| x[i] * y[(i as isize + lag) as usize]).sum() };
        let best = (-20..=20).max_by(|a, b| xc(*a).total_cmp(&xc(*b))).unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn filtfilt_errors() {
        let f = design_butterworth_bandpass(5, 0.75, 3.0, 125.0).unwrap();
        assert!(matches!(filtfilt(&f, &[0.0; 33]), Err(Error::TooShort { .. })));
        let mut x = vec![0.0; 200];
        x[10] = f64::NAN;
        assert!(matches!(filtfilt(&f, &x), Err(Error::NanInput)));
    }
}
