//! CART regression trees on bootstrap samples, averaged into a forest.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried at each split; `None` means `⌈√F⌉`.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 12, min_leaf: 2, features_per_split: None, seed: 0 }
    }
}

impl Hyperparams {
    fn mtry(&self, n_features: usize) -> usize {
        self.features_per_split.unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize).clamp(1, n_features)
    }

    fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_trees == 0 || self.min_leaf == 0 {
            return Err(Error::Config("n_trees and min_leaf must be at least 1".into()));
        }
        if let Some(k) = self.features_per_split {
            if k == 0 || k > n_features {
                return Err(Error::Config(format!("features_per_split {k} outside 1..={n_features}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64, count: usize },
    Split { feature: usize, threshold: f64, left: Box<Node>, right: Box<Node> },
}

impl Node {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { value, .. } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    fn visit_leaves(&self, f: &mut impl FnMut(f64, usize)) {
        match self {
            Node::Leaf { value, count } => f(*value, *count),
            Node::Split { left, right, .. } => {
                left.visit_leaves(f);
                right.visit_leaves(f);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub root: Node,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.root.predict(x)
    }

    /// `(leaf value, training rows)` for every leaf, left to right.
    pub fn leaves(&self) -> Vec<(f64, usize)> {
        let mut out = Vec::new();
        self.root.visit_leaves(&mut |v, c| out.push((v, c)));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub hyperparams: Hyperparams,
    pub n_features: usize,
}

struct Builder<'a> {
    x: Vec<&'a [f64]>,
    y: Vec<f64>,
    hp: &'a Hyperparams,
    mtry: usize,
    n_features: usize,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn leaf(&self, idx: &[usize]) -> Node {
        let value = idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64;
        Node::Leaf { value, count: idx.len() }
    }

    fn build(&self, idx: &mut [usize], depth: usize, rng: &mut impl Rng) -> Node {
        let n = idx.len();
        let first = self.y[idx[0]];
        if depth >= self.hp.max_depth || n < 2 * self.hp.min_leaf || idx.iter().all(|&i| self.y[i] == first) {
            return self.leaf(idx);
        }
        let features: Vec<usize> = if self.mtry >= self.n_features {
            (0..self.n_features).collect()
        } else {
            let mut f = index::sample(rng, self.n_features, self.mtry).into_vec();
            f.sort_unstable();
            f
        };
        let Some(best) = self.best_split(idx, &features) else {
            return self.leaf(idx);
        };
        // Partition in place: rows going left first.
        let mut cut = 0;
        for i in 0..n {
            if self.x[idx[i]][best.feature] <= best.threshold {
                idx.swap(i, cut);
                cut += 1;
            }
        }
        let (l, r) = idx.split_at_mut(cut);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        Node::Split { feature: best.feature, threshold: best.threshold, left: Box::new(left), right: Box::new(right) }
    }

    /// Largest reduction in squared error over the candidate features.
    /// Thresholds are midpoints between consecutive distinct values; both
    /// sides must keep `min_leaf` rows. Ties keep the earlier candidate.
    fn best_split(&self, idx: &[usize], features: &[usize]) -> Option<BestSplit> {
        let n = idx.len();
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let total_sq: f64 = idx.iter().map(|&i| self.y[i] * self.y[i]).sum();
        let parent_sse = total_sq - total * total / n as f64;
        let min_leaf = self.hp.min_leaf;

        let mut best: Option<BestSplit> = None;
        let mut order: Vec<usize> = idx.to_vec();
        for &f in features {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let (mut sum_l, mut sq_l) = (0.0, 0.0);
            for k in 0..n - 1 {
                let yi = self.y[order[k]];
                sum_l += yi;
                sq_l += yi * yi;
                let nl = k + 1;
                let nr = n - nl;
                let (v, v_next) = (self.x[order[k]][f], self.x[order[k + 1]][f]);
                if nl < min_leaf || nr < min_leaf || v == v_next {
                    continue;
                }
                let sum_r = total - sum_l;
                let sq_r = total_sq - sq_l;
                let sse = (sq_l - sum_l * sum_l / nl as f64) + (sq_r - sum_r * sum_r / nr as f64);
                let gain = parent_sse - sse;
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(BestSplit { feature: f, threshold: 0.5 * (v + v_next), gain });
                }
            }
        }
        best
    }
}

/// Train `n_trees` regression trees, each on a bootstrap resample of the
/// rows. Tree `t` draws from a generator seeded by `(seed, t)` so trees can
/// be grown in parallel.
pub fn train_forest(data: &Dataset, hyperparams: &Hyperparams) -> Result<ForestModel> {
    data.validate()?;
    if data.len() < 2 {
        return Err(Error::DegenerateData(format!("{} training row(s)", data.len())));
    }
    let n_features = data.num_features();
    if n_features == 0 {
        return Err(Error::DegenerateData("rows have no features".into()));
    }
    hyperparams.validate(n_features)?;
    let builder = Builder {
        x: data.rows.iter().map(|r| r.features.as_slice()).collect(),
        y: data.rows.iter().map(|r| r.label).collect(),
        hp: hyperparams,
        mtry: hyperparams.mtry(n_features),
        n_features,
    };
    let n = data.len();
    let trees = (0..hyperparams.n_trees)
        .into_par_iter()
        .map(|t| {
            let tree_seed = seed::derive_indexed(hyperparams.seed, "tree", t as u64);
            let mut boot_rng = seed::rng(seed::derive(tree_seed, "bootstrap"));
            let mut feat_rng = seed::rng(seed::derive(tree_seed, "features"));
            let mut idx: Vec<usize> = (0..n).map(|_| boot_rng.random_range(0..n)).collect();
            Tree { root: builder.build(&mut idx, 0, &mut feat_rng) }
        })
        .collect();
    Ok(ForestModel { trees, hyperparams: *hyperparams, n_features })
}

/// Mean of the per-tree predictions.
pub fn predict(model: &ForestModel, features: &[f64]) -> Result<f64> {
    if features.len() != model.n_features {
        return Err(Error::Shape(format!("{} features for a model trained on {}", features.len(), model.n_features)));
    }
    let sum: f64 = model.trees.iter().map(|t| t.predict(features)).sum();
    Ok(sum / model.trees.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{Row, RowMeta};

    fn meta(i: usize) -> RowMeta {
        RowMeta { environment: 0, level: 0, packet: i as u32, seed: i as u64 }
    }

    fn dataset(points: &[(Vec<f64>, f64)]) -> Dataset {
        let f = points[0].0.len();
        Dataset::new(
            (0..f).map(|i| i as f64).collect(),
            points
                .iter()
                .enumerate()
                .map(|(i, (x, y))| Row { features: x.clone(), label: *y, meta: meta(i) })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_labels_predict_constant() {
        let d = dataset(&(0..10).map(|i| (vec![i as f64, (i * i) as f64], 7.5)).collect::<Vec<_>>());
        let m = train_forest(&d, &Hyperparams { n_trees: 5, ..Default::default() }).unwrap();
        for r in &d.rows {
            assert_eq!(predict(&m, &r.features).unwrap(), 7.5);
        }
        assert_eq!(predict(&m, &[100.0, -3.0]).unwrap(), 7.5);
    }

    #[test]
    fn single_row_is_rejected() {
        let d = dataset(&[(vec![1.0], 3.0)]);
        assert!(matches!(train_forest(&d, &Hyperparams::default()), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn leaves_respect_min_leaf_and_tree_count() {
        let pts: Vec<_> = (0..40).map(|i| (vec![i as f64, (i % 7) as f64, (i % 3) as f64], (i % 10) as f64)).collect();
        let d = dataset(&pts);
        let hp = Hyperparams { n_trees: 12, min_leaf: 3, max_depth: 20, features_per_split: Some(2), seed: 5 };
        let m = train_forest(&d, &hp).unwrap();
        assert_eq!(m.trees.len(), 12);
        for t in &m.trees {
            assert!(t.leaves().iter().all(|&(_, c)| c >= 3));
            assert_eq!(t.leaves().iter().map(|&(_, c)| c).sum::<usize>(), 40);
        }
    }

    #[test]
    fn depth_zero_is_bootstrap_mean() {
        let d = dataset(&[(vec![0.0], 0.0), (vec![1.0], 10.0)]);
        let m = train_forest(&d, &Hyperparams { n_trees: 1, max_depth: 0, min_leaf: 1, ..Default::default() }).unwrap();
        let (v, c) = m.trees[0].leaves()[0];
        assert_eq!(c, 2);
        assert!([0.0, 5.0, 10.0].contains(&v));
        assert_eq!(predict(&m, &[0.3]).unwrap(), v);
    }

    #[test]
    fn shape_and_config_errors() {
        let d = dataset(&[(vec![0.0, 1.0], 0.0), (vec![1.0, 0.0], 10.0)]);
        let m = train_forest(&d, &Hyperparams { n_trees: 2, ..Default::default() }).unwrap();
        assert!(matches!(predict(&m, &[1.0]), Err(Error::Shape(_))));
        assert!(train_forest(&d, &Hyperparams { features_per_split: Some(3), ..Default::default() }).is_err());
        assert!(train_forest(&d, &Hyperparams { n_trees: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn json_round_trip() {
        let pts: Vec<_> = (0..30).map(|i| (vec![i as f64, (i % 4) as f64], (i / 3) as f64)).collect();
        let m = train_forest(&dataset(&pts), &Hyperparams { n_trees: 4, seed: 8, ..Default::default() }).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: ForestModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
