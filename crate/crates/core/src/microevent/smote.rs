use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};

use super::features::FeatureMatrix;

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone)]
pub struct SmoteOutcome {
    pub matrix: FeatureMatrix,
    pub k_used: usize,
    pub synthetic: usize,
    pub warning: Option<String>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Oversamples the minority class to the majority count. Originals keep
/// their order; synthetic rows are appended. Each synthetic row is
/// `p + u (q - p)` for a random minority row `p`, one of its `k` nearest
/// minority neighbours `q` and `u ~ U[0, 1]`.
pub fn smote_balance(fm: &FeatureMatrix, k: usize, seed: u64) -> Result<SmoteOutcome> {
    let labels = fm.labels.as_ref().ok_or_else(|| invalid("SMOTE needs labelled rows"))?;
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != 1).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(invalid("SMOTE needs both classes present"));
    }
    let deficit = pos.len().abs_diff(neg.len());
    let (minority, minority_label) = if pos.len() <= neg.len() { (pos, 1u8) } else { (neg, 0u8) };
    let mut warning = None;
    let mut k_used = k;
    if minority.len() < k + 1 {
        k_used = minority.len() - 1;
        let msg = format!("minority class has {} rows; SMOTE k reduced from {k} to {k_used}", minority.len());
        log::warn!("{msg}");
        warning = Some(msg);
    }
    let mut out = fm.clone();
    out.window_starts.clear();
    if deficit == 0 {
        return Ok(SmoteOutcome { matrix: out, k_used, synthetic: 0, warning });
    }

    let neighbours: Vec<Vec<usize>> = minority
        .par_iter()
        .map(|&i| {
            let p = fm.row(i);
            let mut d: Vec<(f64, usize)> =
                minority.iter().filter(|&&j| j != i).map(|&j| (sq_dist(p, fm.row(j)), j)).collect();
            let kk = k_used.min(d.len());
            if kk > 0 && kk < d.len() {
                d.select_nth_unstable_by(kk - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            }
            d.truncate(kk);
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.into_iter().map(|(_, j)| j).collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels_out = out.labels.as_mut().unwrap();
    out.data.reserve(deficit * fm.n_cols());
    for _ in 0..deficit {
        let m = rng.random_range(0..minority.len());
        let p = fm.row(minority[m]);
        let nb = &neighbours[m];
        let q = if nb.is_empty() { p } else { fm.row(nb[rng.random_range(0..nb.len())]) };
        let u: f64 = rng.random();
        out.data.extend(p.iter().zip(q).map(|(a, b)| a + u * (b - a)));
        labels_out.push(minority_label);
    }
    Ok(SmoteOutcome { matrix: out, k_used, synthetic: deficit, warning })
}
