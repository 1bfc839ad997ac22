use std::cell::RefCell;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unit-variance noise with a 1/f power spectrum between `lo_hz` and
/// `hi_hz`, shaped in the frequency domain. The sample mean is exactly 0.
pub fn pink_noise(n: usize, fs_hz: f64, lo_hz: f64, hi_hz: f64, rng: &mut impl Rng) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    let mut buf: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.sample(StandardNormal), 0.0)).collect();
    let (fwd, inv) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n), p.plan_fft_inverse(n))
    });
    fwd.process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * fs_hz / n as f64;
        *v *= if k != 0 && f >= lo_hz && f <= hi_hz { 1.0 / f.sqrt() } else { 0.0 };
    }
    inv.process(&mut buf);
    let x: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let mean = x.iter().sum::<f64>() / n as f64;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    if sd == 0.0 {
        return vec![0.0; n];
    }
    x.iter().map(|v| (v - mean) / sd).collect()
}

pub fn white_noise(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::periodogram;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_variance_and_one_over_f() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = pink_noise(125 * 600, 125.0, 0.5, 35.0, &mut rng);
        assert!(x.iter().sum::<f64>().abs() < 1e-6);
        assert!((mean_power(&x) - 1.0).abs() < 1e-12);
        let p = periodogram(&x, 125.0).unwrap();
        let band = |a, b| p.power[p.band(a, b)].iter().sum::<f64>();
        // equal power per octave
        let r = band(2.0, 4.0) / band(8.0, 16.0);
        assert!((r - 1.0).abs() < 0.1, "{r}");
        assert!(band(0.0, 0.45) < 1e-12 && band(36.0, 62.5) < 1e-12);
    }
}
