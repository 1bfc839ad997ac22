use crate::error::{Error, Result};

pub const DEFAULT_MAX_IMFS: usize = 10;
pub const SIFT_SD_THRESHOLD: f64 = 0.3;
pub const SIFT_ITERATIONS: usize = 10;
/// Sifting may run past `SIFT_ITERATIONS` until the IMF condition holds, up to this cap.
const SIFT_HARD_CAP: usize = 100;
const MIRRORED_EXTREMA: usize = 2;

#[derive(Debug, Clone, Default)]
pub struct EmdResult {
    pub imfs: Vec<Vec<f64>>,
    pub residue: Vec<f64>,
}

impl EmdResult {
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = self.residue.clone();
        for imf in &self.imfs {
            for (o, v) in out.iter_mut().zip(imf) {
                *o += v;
            }
        }
        out
    }
}

/// Local maxima and minima; flat plateaus report their middle sample.
pub(crate) fn extrema(x: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let n = x.len();
    let (mut maxima, mut minima) = (Vec::new(), Vec::new());
    let mut i = 1;
    while i + 1 < n {
        if x[i] == x[i - 1] {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < n && x[j + 1] == x[i] {
            j += 1;
        }
        if j + 1 >= n {
            break;
        }
        let mid = (i + j) / 2;
        if x[i] > x[i - 1] && x[i] > x[j + 1] {
            maxima.push(mid);
        } else if x[i] < x[i - 1] && x[i] < x[j + 1] {
            minima.push(mid);
        }
        i = j + 1;
    }
    (maxima, minima)
}

pub(crate) fn zero_crossings(x: &[f64]) -> usize {
    let mut last = 0.0f64;
    let mut count = 0;
    for &v in x {
        if v != 0.0 {
            if last != 0.0 && (v > 0.0) != (last > 0.0) {
                count += 1;
            }
            last = v;
        }
    }
    count
}

pub(crate) fn is_imf(x: &[f64]) -> bool {
    let (mx, mn) = extrema(x);
    (mx.len() + mn.len()).abs_diff(zero_crossings(x)) <= 1
}

/// Natural cubic spline through strictly increasing knots, evaluated at 0..n.
fn natural_spline(t: &[f64], y: &[f64], n: usize) -> Vec<f64> {
    let m = t.len();
    if m == 1 {
        return vec![y[0]; n];
    }
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    // second derivatives, natural ends: solve the interior tridiagonal system
    let mut z = vec![0.0; m];
    if m > 2 {
        let k = m - 2;
        let mut diag = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for i in 0..k {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
        }
        for i in 1..k {
            let w = h[i] / diag[i - 1];
            diag[i] -= w * h[i];
            rhs[i] -= w * rhs[i - 1];
        }
        z[k] = rhs[k - 1] / diag[k - 1];
        for i in (0..k - 1).rev() {
            z[i + 1] = (rhs[i] - h[i + 1] * z[i + 2]) / diag[i];
        }
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for s in 0..n {
        let s = s as f64;
        while seg + 2 < m && t[seg + 1] < s {
            seg += 1;
        }
        let (a, b) = (t[seg], t[seg + 1]);
        let hh = b - a;
        let (u, v) = (b - s, s - a);
        out.push(
            z[seg] * u.powi(3) / (6.0 * hh)
                + z[seg + 1] * v.powi(3) / (6.0 * hh)
                + (y[seg] / hh - z[seg] * hh / 6.0) * u
                + (y[seg + 1] / hh - z[seg + 1] * hh / 6.0) * v,
        );
    }
    out
}

/// Envelope knots: the extrema plus `MIRRORED_EXTREMA` reflected about each
/// end. An end sample beyond the outermost extremum joins the knots itself.
fn envelope(x: &[f64], idx: &[usize], upper: bool) -> Vec<f64> {
    let n = x.len();
    let last = (n - 1) as f64;
    let beyond = |v: f64, e: f64| if upper { v > e } else { v < e };
    let mut knots: Vec<(f64, f64)> = Vec::with_capacity(idx.len() + 2 * MIRRORED_EXTREMA + 2);
    for &i in idx.iter().take(MIRRORED_EXTREMA).rev() {
        if i > 0 {
            knots.push((-(i as f64), x[i]));
        }
    }
    if beyond(x[0], x[idx[0]]) {
        knots.push((0.0, x[0]));
    }
    knots.extend(idx.iter().map(|&i| (i as f64, x[i])));
    if beyond(x[n - 1], x[idx[idx.len() - 1]]) {
        knots.push((last, x[n - 1]));
    }
    for &i in idx.iter().rev().take(MIRRORED_EXTREMA) {
        if i < n - 1 {
            knots.push((2.0 * last - i as f64, x[i]));
        }
    }
    knots.dedup_by(|b, a| b.0 <= a.0);
    let (t, y): (Vec<f64>, Vec<f64>) = knots.into_iter().unzip();
    natural_spline(&t, &y, n)
}

/// One sifting pass sequence. `None` when the input has no maxima or no minima.
fn sift(r: &[f64]) -> Option<Vec<f64>> {
    let mut h = r.to_vec();
    let mut changed = false;
    for iter in 1..=SIFT_HARD_CAP {
        let (mx, mn) = extrema(&h);
        if mx.is_empty() || mn.is_empty() {
            break;
        }
        let up = envelope(&h, &mx, true);
        let lo = envelope(&h, &mn, false);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..h.len() {
            let m = 0.5 * (up[i] + lo[i]);
            den += h[i] * h[i];
            num += m * m;
            h[i] -= m;
        }
        changed = true;
        let sd = if den > 0.0 { num / den } else { 0.0 };
        if (sd < SIFT_SD_THRESHOLD || iter >= SIFT_ITERATIONS) && is_imf(&h) {
            break;
        }
    }
    changed.then_some(h)
}

/// Empirical mode decomposition. Stops once the residue has no maxima or
/// no minima, or after `max_imfs` modes.
pub fn emd(x: &[f64], max_imfs: usize) -> Result<EmdResult> {
    if x.len() < 8 {
        return Err(Error::TooShort { needed: 8, got: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NanInput);
    }
    let mut residue = x.to_vec();
    let mut imfs = Vec::new();
    while imfs.len() < max_imfs {
        let Some(imf) = sift(&residue) else {
            break;
        };
        for (r, v) in residue.iter_mut().zip(&imf) {
            *r -= v;
        }
        imfs.push(imf);
    }
    Ok(EmdResult { imfs, residue })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let mut sab = 0.0;
        let mut saa = 0.0;
        let mut sbb = 0.0;
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma).powi(2);
            sbb += (y - mb).powi(2);
        }
        sab / (saa * sbb).sqrt()
    }

    fn tone(f: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * f * i as f64 / 125.0).sin()).collect()
    }

    #[test]
    fn spline_reproduces_cubic_free_interior() {
        // natural spline through collinear knots is the line itself
        let t = [0.0, 1.5, 4.0, 7.0];
        let y: Vec<f64> = t.iter().map(|v| 2.0 * v - 1.0).collect();
        let s = natural_spline(&t, &y, 8);
        for (i, v) in s.iter().enumerate() {
            assert!((v - (2.0 * i as f64 - 1.0)).abs() < 1e-12);
        }
        // and interpolates arbitrary knots exactly
        let t = [0.0, 2.0, 3.0, 7.0];
        let y = [1.0, -2.0, 0.5, 3.0];
        let s = natural_spline(&t, &y, 8);
        for (ti, yi) in t.iter().zip(y) {
            assert!((s[*ti as usize] - yi).abs() < 1e-12);
        }
    }

    #[test]
    fn extrema_and_crossings() {
        let x = [0.0, 1.0, 1.0, 1.0, 0.0, -1.0, 0.0, 2.0, -1.0];
        let (mx, mn) = extrema(&x);
        assert_eq!(mx, vec![2, 7]);
        assert_eq!(mn, vec![5]);
        assert_eq!(zero_crossings(&x), 3);
    }

    #[test]
    fn pure_tone_is_first_mode() {
        let x = tone(11.0, 1000);
        let r = emd(&x, DEFAULT_MAX_IMFS).unwrap();
        assert!(corr(&r.imfs[0], &x) >= 0.99);
    }

    #[test]
    fn two_tones_separate() {
        let fast = tone(20.0, 1250);
        let x: Vec<f64> = tone(2.0, 1250).iter().zip(&fast).map(|(a, b)| a + b).collect();
        let r = emd(&x, DEFAULT_MAX_IMFS).unwrap();
        assert!(corr(&r.imfs[0], &fast) >= 0.95);
    }

    #[test]
    fn constant_has_no_modes() {
        let r = emd(&[2.5; 50], DEFAULT_MAX_IMFS).unwrap();
        assert!(r.imfs.is_empty());
        assert_eq!(r.residue, vec![2.5; 50]);
        assert!(emd(&[1.0; 7], 3).is_err());
    }

    #[test]
    fn noise_reconstructs_and_modes_are_imfs() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..500).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r = emd(&x, DEFAULT_MAX_IMFS).unwrap();
            let y = r.reconstruct();
            let rms = (x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 500.0).sqrt();
            assert!(rms < 1e-8);
            for imf in &r.imfs {
                assert!(is_imf(imf));
            }
        }
    }
}
