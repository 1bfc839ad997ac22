use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::recording::EventKind;

use super::features::FeatureMatrix;

pub const DEFAULT_TREES: usize = 100;
const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
struct FlatNode {
    feature: u32,
    threshold: f64,
    left: u32,
    right: u32,
    votes: [u32; 2],
}

/// A binary decision tree stored as an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<FlatNode>,
}

impl Tree {
    /// Class with the most training votes at the reached leaf (ties go to 0).
    pub fn predict(&self, row: &[f64]) -> u8 {
        let mut i = 0usize;
        loop {
            let n = &self.nodes[i];
            if n.feature == LEAF {
                return u8::from(n.votes[1] > n.votes[0]);
            }
            i = if row[n.feature as usize] <= n.threshold { n.left } else { n.right } as usize;
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 1usize)];
        while let Some((i, d)) = stack.pop() {
            best = best.max(d);
            let n = &self.nodes[i];
            if n.feature != LEAF {
                stack.push((n.left as usize, d + 1));
                stack.push((n.right as usize, d + 1));
            }
        }
        best
    }
}

/// Nested JSON form of a tree node.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum NodeJson {
    Split { feature: u32, threshold: f64, left: Box<NodeJson>, right: Box<NodeJson> },
    Leaf { votes: [u32; 2] },
}

impl Tree {
    fn to_json(&self, i: usize) -> NodeJson {
        let n = &self.nodes[i];
        if n.feature == LEAF {
            NodeJson::Leaf { votes: n.votes }
        } else {
            NodeJson::Split {
                feature: n.feature,
                threshold: n.threshold,
                left: Box::new(self.to_json(n.left as usize)),
                right: Box::new(self.to_json(n.right as usize)),
            }
        }
    }

    fn from_json(root: &NodeJson, n_features: usize) -> Result<Tree> {
        let mut nodes = Vec::new();
        let mut stack = vec![(root, None::<(usize, bool)>)];
        while let Some((node, parent)) = stack.pop() {
            let idx = nodes.len() as u32;
            if let Some((p, is_left)) = parent {
                let pn: &mut FlatNode = &mut nodes[p];
                if is_left {
                    pn.left = idx;
                } else {
                    pn.right = idx;
                }
            }
            match node {
                NodeJson::Leaf { votes } => {
                    nodes.push(FlatNode { feature: LEAF, threshold: 0.0, left: 0, right: 0, votes: *votes })
                }
                NodeJson::Split { feature, threshold, left, right } => {
                    if *feature as usize >= n_features || !threshold.is_finite() {
                        return Err(invalid(format!("bad split on feature {feature} at {threshold}")));
                    }
                    nodes.push(FlatNode { feature: *feature, threshold: *threshold, left: 0, right: 0, votes: [0, 0] });
                    stack.push((right, Some((idx as usize, false))));
                    stack.push((left, Some((idx as usize, true))));
                }
            }
        }
        Ok(Tree { nodes })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    schema_hash: String,
    kind: EventKind,
    n_trees: usize,
    n_features: usize,
    seed: u64,
    trees: Vec<NodeJson>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub seed: u64,
    pub schema_hash: String,
    pub n_features: usize,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: u8,
    pub positive_fraction: f64,
}

fn gini_weighted(c0: usize, c1: usize) -> f64 {
    let n = (c0 + c1) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (p0, p1) = (c0 as f64 / n, c1 as f64 / n);
    n * (1.0 - p0 * p0 - p1 * p1)
}

struct Builder<'a> {
    fm: &'a FeatureMatrix,
    labels: &'a [u8],
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<FlatNode>,
    pairs: Vec<(f64, u8)>,
}

impl Builder<'_> {
    /// Best (threshold, weighted child impurity) for one feature, or None if
    /// the feature is constant over `idx`.
    fn best_split(&mut self, idx: &[usize], feature: usize) -> Option<(f64, f64)> {
        self.pairs.clear();
        self.pairs.extend(idx.iter().map(|&i| (self.fm.row(i)[feature], self.labels[i])));
        self.pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let total1 = self.pairs.iter().filter(|p| p.1 == 1).count();
        let n = self.pairs.len();
        let mut l = [0usize; 2];
        let mut best: Option<(f64, f64)> = None;
        for s in 0..n - 1 {
            l[self.pairs[s].1 as usize] += 1;
            let (a, b) = (self.pairs[s].0, self.pairs[s + 1].0);
            if a == b {
                continue;
            }
            let imp = gini_weighted(l[0], l[1]) + gini_weighted(n - s - 1 - (total1 - l[1]), total1 - l[1]);
            if best.is_none_or(|(_, bi)| imp < bi) {
                let mut thr = a + 0.5 * (b - a);
                if !(thr < b) || !thr.is_finite() {
                    thr = a;
                }
                best = Some((thr, imp));
            }
        }
        best
    }

    fn grow(&mut self, root: Vec<usize>) {
        let n_features = self.fm.n_cols();
        let mut order: Vec<usize> = (0..n_features).collect();
        let mut stack: Vec<(usize, Vec<usize>)> = vec![(0, root)];
        self.nodes.push(FlatNode { feature: LEAF, threshold: 0.0, left: 0, right: 0, votes: [0, 0] });
        while let Some((node, idx)) = stack.pop() {
            let c1 = idx.iter().filter(|&&i| self.labels[i] == 1).count();
            let votes = [(idx.len() - c1) as u32, c1 as u32];
            self.nodes[node].votes = votes;
            if votes[0] == 0 || votes[1] == 0 {
                continue;
            }
            order.shuffle(&mut self.rng);
            let mut chosen: Option<(usize, f64, f64)> = None;
            for (tried, &f) in order.iter().enumerate() {
                if tried >= self.mtry && chosen.is_some() {
                    break;
                }
                if let Some((thr, imp)) = self.best_split(&idx, f) {
                    if chosen.is_none_or(|(_, _, bi)| imp < bi) {
                        chosen = Some((f, thr, imp));
                    }
                }
            }
            let Some((f, thr, _)) = chosen else {
                continue;
            };
            let (left, right): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.fm.row(i)[f] <= thr);
            let li = self.nodes.len();
            let blank = FlatNode { feature: LEAF, threshold: 0.0, left: 0, right: 0, votes: [0, 0] };
            self.nodes.push(blank.clone());
            self.nodes.push(blank);
            let n = &mut self.nodes[node];
            n.feature = f as u32;
            n.threshold = thr;
            n.left = li as u32;
            n.right = li as u32 + 1;
            stack.push((li + 1, right));
            stack.push((li, left));
        }
    }
}

/// Number of candidate features per split: ceil(sqrt(F)).
pub fn candidate_features(n_features: usize) -> usize {
    ((n_features as f64).sqrt().ceil() as usize).max(1)
}

/// Bagged Gini trees grown to purity. Tree `t` draws its bootstrap and
/// feature subsets from a ChaCha8 stream `t` keyed by `seed`, so the result
/// does not depend on thread scheduling.
pub fn train_forest(fm: &FeatureMatrix, kind: EventKind, n_trees: usize, seed: u64) -> Result<ForestModel> {
    let labels = fm.labels.as_deref().ok_or_else(|| invalid("training needs labelled rows"))?;
    let n = fm.n_rows();
    if n < 10 {
        return Err(Error::TooShort { needed: 10, got: n });
    }
    if labels.len() != n {
        return Err(Error::LengthMismatch(format!("{n} rows but {} labels", labels.len())));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(invalid("training needs both classes"));
    }
    if n_trees == 0 {
        return Err(invalid("forest needs at least one tree"));
    }
    if fm.data.iter().any(|v| !v.is_finite()) {
        return Err(invalid("feature matrix contains non-finite values"));
    }
    let mtry = candidate_features(fm.n_cols());
    let trees: Vec<Tree> = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut b = Builder { fm, labels, mtry, rng, nodes: Vec::new(), pairs: Vec::with_capacity(n) };
            b.grow(sample);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(ForestModel { trees, seed, schema_hash: fm.schema_hash(), n_features: fm.n_cols(), kind })
}

impl ForestModel {
    pub fn predict_row(&self, row: &[f64]) -> Prediction {
        let ones = self.trees.iter().filter(|t| t.predict(row) == 1).count();
        let zeros = self.trees.len() - ones;
        Prediction { label: u8::from(ones > zeros), positive_fraction: ones as f64 / self.trees.len() as f64 }
    }

    pub fn predict(&self, fm: &FeatureMatrix) -> Result<Vec<Prediction>> {
        if fm.n_rows() == 0 {
            return Ok(Vec::new());
        }
        let actual = fm.schema_hash();
        if actual != self.schema_hash {
            return Err(Error::SchemaMismatch { expected: self.schema_hash.clone(), actual });
        }
        Ok((0..fm.n_rows()).into_par_iter().map(|i| self.predict_row(fm.row(i))).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        let m = ModelJson {
            schema_hash: self.schema_hash.clone(),
            kind: self.kind,
            n_trees: self.trees.len(),
            n_features: self.n_features,
            seed: self.seed,
            trees: self.trees.iter().map(|t| t.to_json(0)).collect(),
        };
        Ok(serde_json::to_string(&m)?)
    }

    pub fn from_json(s: &str) -> Result<ForestModel> {
        let mut de = serde_json::Deserializer::from_str(s);
        de.disable_recursion_limit();
        let m = ModelJson::deserialize(&mut de)?;
        de.end()?;
        if m.trees.len() != m.n_trees || m.n_trees == 0 {
            return Err(invalid(format!("model declares {} trees but holds {}", m.n_trees, m.trees.len())));
        }
        let trees = m.trees.iter().map(|t| Tree::from_json(t, m.n_features)).collect::<Result<Vec<_>>>()?;
        Ok(ForestModel { trees, seed: m.seed, schema_hash: m.schema_hash, n_features: m.n_features, kind: m.kind })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ForestModel> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        ForestModel::from_json(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::Malformed { path: path.to_path_buf(), reason: e.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n: usize, seed: u64, sep: f64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let l = (i % 2) as u8;
            data.extend((0..6).map(|_| sep * l as f64 + rng.random_range(-1.0..1.0)));
            labels.push(l);
        }
        FeatureMatrix {
            columns: (0..6).map(|i| format!("f{i}")).collect(),
            data,
            labels: Some(labels),
            fs_hz: 125.0,
            window_len: 125,
            hop: 31,
            window_starts: vec![],
        }
    }

    #[test]
    fn separable_blobs_fit_exactly() {
        let fm = blobs(200, 1, 3.0);
        let m = train_forest(&fm, EventKind::Spindle, 25, 9).unwrap();
        let p = m.predict(&fm).unwrap();
        let labels = fm.labels.as_ref().unwrap();
        assert!(p.iter().zip(labels).all(|(p, l)| p.label == *l));
        assert!(p.iter().all(|p| (0.0..=1.0).contains(&p.positive_fraction)));
    }

    #[test]
    fn seed_determinism_and_json_round_trip() {
        let fm = blobs(120, 2, 0.7);
        let a = train_forest(&fm, EventKind::KComplex, 10, 5).unwrap();
        let b = train_forest(&fm, EventKind::KComplex, 10, 5).unwrap();
        assert_eq!(a, b);
        let held = blobs(50, 3, 0.7);
        assert_eq!(a.predict(&held).unwrap(), b.predict(&held).unwrap());
        let back = ForestModel::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back.predict(&held).unwrap(), a.predict(&held).unwrap());
        assert_eq!(back.to_json().unwrap(), a.to_json().unwrap());
    }

    #[test]
    fn errors_and_edges() {
        let mut fm = blobs(20, 4, 1.0);
        fm.labels = Some(vec![1; 20]);
        assert!(train_forest(&fm, EventKind::Spindle, 5, 1).is_err());
        assert!(train_forest(&blobs(8, 4, 1.0), EventKind::Spindle, 5, 1).is_err());
        let m = train_forest(&blobs(40, 5, 1.0), EventKind::Spindle, 5, 1).unwrap();
        let mut empty = blobs(0, 5, 1.0);
        assert!(m.predict(&empty).unwrap().is_empty());
        empty.columns.push("extra".into());
        empty.data = vec![0.0; 7];
        assert!(matches!(m.predict(&empty), Err(Error::SchemaMismatch { .. })));
        let mut same = blobs(4, 6, 1.0);
        same.data = [0.5; 6].repeat(4);
        let p = m.predict(&same).unwrap();
        assert!(p.iter().all(|q| *q == p[0]));
        assert_eq!(candidate_features(60), 8);
    }
}
