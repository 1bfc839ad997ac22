use crate::error::{Error, Result};

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_SWEEPS: usize = 100;

/// Eigen-decomposition of a 3-channel covariance and the projected series.
#[derive(Debug, Clone)]
pub struct Pca3Decomposition {
    pub sigma: [[f64; 3]; 3],
    /// `phi[r][c]`: row r of the eigenvector matrix; column c is eigenvector c.
    pub phi: [[f64; 3]; 3],
    pub lambda: [f64; 3],
    pub components: [Vec<f64>; 3],
}

impl Pca3Decomposition {
    pub fn eigenvector(&self, i: usize) -> [f64; 3] {
        [self.phi[0][i], self.phi[1][i], self.phi[2][i]]
    }
}

/// Cyclic Jacobi rotations on a symmetric 3x3 matrix. Returns eigenvalues
/// and the accumulated rotation (eigenvectors in columns), unsorted.
fn jacobi3(mut a: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let scale = (0..3).map(|i| a[i][i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for _ in 0..JACOBI_SWEEPS {
        let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        if off.sqrt() <= JACOBI_TOL * scale {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let (akp, akq) = (a[k][p], a[k][q]);
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let (apk, aqk) = (a[p][k], a[q][k]);
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let (vp, vq) = (row[p], row[q]);
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}

/// Principal components of three equal-length channels. Channels are
/// mean-removed; covariance uses 1/(M-1). Eigenvalues descend and each
/// eigenvector's largest-magnitude entry is made positive.
pub fn pca3(window: [&[f64]; 3]) -> Result<Pca3Decomposition> {
    let m = window[0].len();
    if window.iter().any(|w| w.len() != m) {
        return Err(Error::LengthMismatch("pca3 channels differ in length".into()));
    }
    if m < 3 {
        return Err(Error::TooShort { needed: 3, got: m });
    }
    if window.iter().any(|w| w.iter().any(|v| !v.is_finite())) {
        return Err(Error::NanInput);
    }
    let centered: [Vec<f64>; 3] = std::array::from_fn(|c| {
        let mean = window[c].iter().sum::<f64>() / m as f64;
        window[c].iter().map(|v| v - mean).collect()
    });
    let mut sigma = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let s = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum::<f64>() / (m - 1) as f64;
            sigma[i][j] = s;
            sigma[j][i] = s;
        }
    }
    let (vals, vecs) = jacobi3(sigma);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let mut phi = [[0.0; 3]; 3];
    let mut lambda = [0.0; 3];
    for (dst, &src) in order.iter().enumerate() {
        lambda[dst] = vals[src];
        let col = [vecs[0][src], vecs[1][src], vecs[2][src]];
        let lead = col.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        for r in 0..3 {
            phi[r][dst] = sign * col[r];
        }
    }
    let components =
        std::array::from_fn(|i| (0..m).map(|t| (0..3).map(|c| centered[c][t] * phi[c][i]).sum()).collect());
    Ok(Pca3Decomposition { sigma, phi, lambda, components })
}
