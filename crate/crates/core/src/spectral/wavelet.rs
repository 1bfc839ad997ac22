use crate::error::{Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// db2 decomposition low-pass taps.
fn lowpass() -> [f64; 4] {
    let s = 4.0 * std::f64::consts::SQRT_2;
    [(1.0 + SQRT3) / s, (3.0 + SQRT3) / s, (3.0 - SQRT3) / s, (1.0 - SQRT3) / s]
}

fn highpass() -> [f64; 4] {
    let h = lowpass();
    [h[3], -h[2], h[1], -h[0]]
}

fn analyze(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let (h, g) = (lowpass(), highpass());
    let half = n / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for k in 0..half {
        for m in 0..4 {
            let v = x[(2 * k + m) % n];
            a[k] += h[m] * v;
            d[k] += g[m] * v;
        }
    }
    (a, d)
}

fn synthesize(a: &[f64], d: &[f64]) -> Vec<f64> {
    let n = 2 * a.len();
    let (h, g) = (lowpass(), highpass());
    let mut x = vec![0.0; n];
    for k in 0..a.len() {
        for m in 0..4 {
            x[(2 * k + m) % n] += h[m] * a[k] + g[m] * d[k];
        }
    }
    x
}

/// Two-level periodic db2 decomposition. Inputs whose length is not a
/// multiple of 4 are extended by repeating the last sample; `len` keeps the
/// original length for the inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct Dwt2 {
    pub approx2: Vec<f64>,
    pub detail2: Vec<f64>,
    pub detail1: Vec<f64>,
    pub len: usize,
}

impl Dwt2 {
    /// Sample index (in the input) that level-2 coefficient `k` is centered on.
    pub fn level2_center(k: usize) -> f64 {
        4.0 * k as f64 + 4.5
    }
}

pub fn dwt2_db2(x: &[f64]) -> Result<Dwt2> {
    if x.len() < 4 {
        return Err(Error::TooShort { needed: 4, got: x.len() });
    }
    let mut padded = x.to_vec();
    let last = x[x.len() - 1];
    padded.resize(x.len().div_ceil(4) * 4, last);
    let (a1, detail1) = analyze(&padded);
    let (approx2, detail2) = analyze(&a1);
    Ok(Dwt2 { approx2, detail2, detail1, len: x.len() })
}

pub fn idwt2_db2(c: &Dwt2) -> Vec<f64> {
    let a1 = synthesize(&c.approx2, &c.detail2);
    let mut x = synthesize(&a1, &c.detail1);
    x.truncate(c.len);
    x
}
