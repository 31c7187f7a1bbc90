//! Random forest of multi-output classification trees.
//!
//! A split minimizes the weighted mean over labels of the children's Gini
//! impurity. Leaves keep the (bootstrap-weighted) positive fraction of every
//! label, and the forest score is the average over trees.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::columns::{midpoint, ColumnIndex};
use super::parallel_map;
use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, FeatureMatrix, LabelMatrix};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    #[default]
    Sqrt,
    Log2,
    /// Every feature at every node.
    All,
}

impl MaxFeatures {
    pub fn count(self, n_features: usize) -> usize {
        let n = n_features as f64;
        let k = match self {
            MaxFeatures::Sqrt => n.sqrt() as usize,
            MaxFeatures::Log2 => n.log2() as usize,
            MaxFeatures::All => n_features,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    #[default]
    None,
    /// Positives of label `l` weigh `n / (2 n_pos)`, negatives `n / (2 n_neg)`.
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_estimators: usize,
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub class_weight: ClassWeight,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 25,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            class_weight: ClassWeight::None,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::invalid("n_estimators must be at least 1"));
        }
        if self.min_samples_split < 2 {
            return Err(Error::invalid("min_samples_split must be at least 2"));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::invalid("min_samples_leaf must be at least 1"));
        }
        if self.max_depth == Some(0) {
            return Err(Error::invalid("max_depth must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    /// Non-zero `(label, positive fraction)` pairs.
    Leaf { values: Vec<(u32, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf_for(&self, x: &FeatureMatrix, row: usize) -> &[(u32, f64)] {
        let mut n = 0usize;
        loop {
            match &self.nodes[n] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => n = if x.get(row, *feature as usize) <= *threshold { *left } else { *right } as usize,
                TreeNode::Leaf { values } => return values,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], n: usize) -> usize {
            match &nodes[n] {
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub params: ForestParams,
    pub n_features: usize,
    pub n_labels: usize,
    pub trees: Vec<Tree>,
}

impl RandomForest {
    pub fn predict_scores(&self, x: &FeatureMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(x.rows(), self.n_labels);
        let scale = 1.0 / self.trees.len() as f64;
        for i in 0..x.rows() {
            let row = out.row_mut(i);
            for t in &self.trees {
                for &(l, v) in t.leaf_for(x, i) {
                    row[l as usize] += v;
                }
            }
            for v in row.iter_mut() {
                *v = (*v * scale).clamp(0.0, 1.0);
            }
        }
        out
    }
}

/// Everything a tree builder reads; shared by all trees.
struct Problem<'a> {
    x: &'a FeatureMatrix,
    cols: &'a ColumnIndex,
    labels: Vec<Vec<u32>>,
    n_labels: usize,
    /// `(positive, negative)` weights per label, when balanced.
    class_weights: Option<Vec<(f64, f64)>>,
    /// Features with at least one non-zero per row, for presence tests.
    row_features: Vec<Vec<u32>>,
    params: &'a ForestParams,
}

pub fn fit_random_forest(x: &FeatureMatrix, y: &LabelMatrix, params: &ForestParams, workers: usize) -> Result<RandomForest> {
    params.validate()?;
    if x.rows() != y.rows() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            actual: y.rows(),
        });
    }
    if x.rows() == 0 {
        return Err(Error::invalid("cannot fit a forest on zero rows"));
    }
    if !x.all_finite() {
        return Err(Error::invalid("feature matrix contains non-finite values"));
    }
    let cols = ColumnIndex::new(x);
    let n = x.rows() as f64;
    let class_weights = (params.class_weight == ClassWeight::Balanced).then(|| {
        y.column_sums()
            .iter()
            .map(|&p| {
                let p = p as f64;
                let wp = if p > 0.0 { n / (2.0 * p) } else { 0.0 };
                let wn = if n - p > 0.0 { n / (2.0 * (n - p)) } else { 0.0 };
                (wp, wn)
            })
            .collect()
    });
    let row_features = (0..x.rows())
        .map(|i| {
            let mut f = Vec::new();
            x.for_each_in_row(i, |j, v| {
                if v != 0.0 {
                    f.push(j as u32);
                }
            });
            f
        })
        .collect();
    let problem = Problem {
        x,
        cols: &cols,
        labels: (0..y.rows()).map(|i| y.positives(i).into_iter().map(|l| l as u32).collect()).collect(),
        n_labels: y.cols(),
        class_weights,
        row_features,
        params,
    };
    let trees = parallel_map(params.n_estimators, workers, |t| {
        build_tree(&problem, rng::derive(params.seed, t as u64))
    });
    Ok(RandomForest {
        params: params.clone(),
        n_features: x.cols(),
        n_labels: y.cols(),
        trees,
    })
}

struct Builder<'p, 'a> {
    p: &'p Problem<'a>,
    rng: rng::Rng,
    weight: Vec<f64>,
    /// Node membership stamp per row.
    stamp: Vec<u32>,
    feature_stamp: Vec<u32>,
    current: u32,
    nodes: Vec<TreeNode>,
}

struct Best {
    score: f64,
    feature: usize,
    threshold: f64,
}

/// Split statistics of one side, kept incrementally as rows move left.
struct Side {
    w: f64,
    pos: Vec<f64>,
    s1: f64,
    s2: f64,
    cross: f64,
}

impl Side {
    fn new(l: usize) -> Self {
        Self {
            w: 0.0,
            pos: vec![0.0; l],
            s1: 0.0,
            s2: 0.0,
            cross: 0.0,
        }
    }

    fn reset(&mut self) {
        self.w = 0.0;
        self.pos.iter_mut().for_each(|v| *v = 0.0);
        self.s1 = 0.0;
        self.s2 = 0.0;
        self.cross = 0.0;
    }

    fn add_label(&mut self, l: usize, w: f64, total: &[f64]) {
        let p = self.pos[l];
        self.s2 += 2.0 * w * p + w * w;
        self.cross += w * total[l];
        self.s1 += w;
        self.pos[l] = p + w;
    }
}

fn build_tree(p: &Problem<'_>, seed: u64) -> Tree {
    let n = p.x.rows();
    let mut r = rng::seeded(seed);
    let mut weight = vec![0.0; n];
    if p.params.bootstrap {
        for _ in 0..n {
            weight[r.gen_range(0..n)] += 1.0;
        }
    } else {
        weight.iter_mut().for_each(|w| *w = 1.0);
    }
    let rows: Vec<usize> = (0..n).filter(|&i| weight[i] > 0.0).collect();
    let mut b = Builder {
        p,
        rng: r,
        weight,
        stamp: vec![0; n],
        feature_stamp: vec![0; p.x.cols()],
        current: 0,
        nodes: Vec::new(),
    };
    b.grow(rows);
    Tree { nodes: b.nodes }
}

impl Builder<'_, '_> {
    fn grow(&mut self, root: Vec<usize>) {
        // (rows, depth, slot in `nodes`)
        let mut stack = vec![(root, 0usize, 0usize)];
        self.nodes.push(TreeNode::Leaf { values: Vec::new() });
        while let Some((rows, depth, slot)) = stack.pop() {
            let totals = self.label_totals(&rows);
            let w: f64 = rows.iter().map(|&i| self.weight[i]).sum();
            let pure = totals.iter().all(|&t| t == 0.0 || t == w);
            let can_split = !pure
                && w >= self.p.params.min_samples_split as f64
                && w >= 2.0 * self.p.params.min_samples_leaf as f64
                && self.p.params.max_depth.is_none_or(|d| depth < d);
            let split = if can_split { self.best_split(&rows, &totals, w) } else { None };
            match split {
                Some(best) => {
                    let (left, right): (Vec<usize>, Vec<usize>) = rows
                        .iter()
                        .partition(|&&i| self.p.x.get(i, best.feature) <= best.threshold);
                    let l = self.nodes.len();
                    self.nodes.push(TreeNode::Leaf { values: Vec::new() });
                    self.nodes.push(TreeNode::Leaf { values: Vec::new() });
                    self.nodes[slot] = TreeNode::Split {
                        feature: best.feature as u32,
                        threshold: best.threshold,
                        left: l as u32,
                        right: (l + 1) as u32,
                    };
                    stack.push((right, depth + 1, l + 1));
                    stack.push((left, depth + 1, l));
                }
                None => {
                    let values = totals
                        .iter()
                        .enumerate()
                        .filter(|(_, &t)| t > 0.0)
                        .map(|(l, &t)| (l as u32, t / w))
                        .collect();
                    self.nodes[slot] = TreeNode::Leaf { values };
                }
            }
        }
    }

    /// Weighted positive count per label.
    fn label_totals(&self, rows: &[usize]) -> Vec<f64> {
        let mut t = vec![0.0; self.p.n_labels];
        for &i in rows {
            for &l in &self.p.labels[i] {
                t[l as usize] += self.weight[i];
            }
        }
        t
    }

    /// Weighted child impurity, summed over labels (lower is better).
    fn child_score(&self, left: &Side, totals: &[f64], total_s2: f64, w: f64) -> f64 {
        let wl = left.w;
        let wr = w - wl;
        match &self.p.class_weights {
            None => {
                let s1r: f64 = totals.iter().sum::<f64>() - left.s1;
                let s2r = total_s2 - 2.0 * left.cross + left.s2;
                2.0 * (wl * left.s1 - left.s2) / wl + 2.0 * (wr * s1r - s2r) / wr
            }
            Some(cw) => {
                let mut s = 0.0;
                for (l, &(a, b)) in cw.iter().enumerate() {
                    let tot = a * totals[l] + b * (w - totals[l]);
                    if tot <= 0.0 {
                        continue;
                    }
                    let (pl, nl) = (a * left.pos[l], b * (wl - left.pos[l]));
                    let (pr, nr) = (a * (totals[l] - left.pos[l]), b * (wr - (totals[l] - left.pos[l])));
                    if pl + nl > 0.0 {
                        s += 2.0 * pl * nl / ((pl + nl) * tot);
                    }
                    if pr + nr > 0.0 {
                        s += 2.0 * pr * nr / ((pr + nr) * tot);
                    }
                }
                s
            }
        }
    }

    fn best_split(&mut self, rows: &[usize], totals: &[f64], w: f64) -> Option<Best> {
        self.current += 1;
        let stamp = self.current;
        for &i in rows {
            self.stamp[i] = stamp;
            for &f in &self.p.row_features[i] {
                self.feature_stamp[f as usize] = stamp;
            }
        }
        let n_features = self.p.x.cols();
        let wanted = self.p.params.max_features.count(n_features);
        let order = index::sample(&mut self.rng, n_features, n_features);
        let total_s2: f64 = totals.iter().map(|t| t * t).sum();
        let min_leaf = self.p.params.min_samples_leaf as f64;

        let mut best: Option<Best> = None;
        let mut visited = 0;
        let mut side = Side::new(self.p.n_labels);
        let mut nz_pos = vec![0.0; self.p.n_labels];
        let mut entries: Vec<(f64, usize)> = Vec::new();
        for f in order.iter() {
            if visited >= wanted {
                break;
            }
            // a feature that is zero on every row of the node is constant
            if self.feature_stamp[f] != stamp {
                continue;
            }
            entries.clear();
            if rows.len() * 8 < self.p.cols.nnz(f) {
                for &i in rows {
                    let v = self.p.x.get(i, f);
                    if v != 0.0 {
                        entries.push((v, i));
                    }
                }
                entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            } else {
                let (cr, cv) = self.p.cols.column(f);
                entries.extend(
                    cr.iter()
                        .zip(cv)
                        .filter(|(&r, _)| self.stamp[r as usize] == stamp)
                        .map(|(&r, &v)| (v, r as usize)),
                );
            }
            let nz_w: f64 = entries.iter().map(|&(_, i)| self.weight[i]).sum();
            let zero_w = w - nz_w;
            let lo = entries.first().map_or(0.0, |e| e.0).min(if zero_w > 0.0 { 0.0 } else { f64::INFINITY });
            let hi = entries.last().map_or(0.0, |e| e.0).max(if zero_w > 0.0 { 0.0 } else { f64::NEG_INFINITY });
            if lo == hi {
                continue;
            }
            visited += 1;

            nz_pos.iter_mut().for_each(|v| *v = 0.0);
            for &(_, i) in &entries {
                for &l in &self.p.labels[i] {
                    nz_pos[l as usize] += self.weight[i];
                }
            }
            side.reset();
            let mut prev: Option<f64> = None;
            let mut zero_done = zero_w <= 0.0;
            let mut k = 0;
            loop {
                // next group: the zero block sits between negatives and positives
                let next_v = entries.get(k).map(|e| e.0);
                let take_zero = !zero_done && next_v.is_none_or(|v| v > 0.0);
                let v = if take_zero { 0.0 } else {
                    match next_v {
                        Some(v) => v,
                        None => break,
                    }
                };
                if let Some(pv) = prev {
                    if v > pv && side.w >= min_leaf && w - side.w >= min_leaf {
                        let score = self.child_score(&side, totals, total_s2, w);
                        if best.as_ref().is_none_or(|b| score < b.score - 1e-12 * b.score.abs().max(1e-300)) {
                            best = Some(Best {
                                score,
                                feature: f,
                                threshold: midpoint(pv, v),
                            });
                        }
                    }
                }
                if take_zero {
                    side.w += zero_w;
                    for l in 0..self.p.n_labels {
                        let z = totals[l] - nz_pos[l];
                        if z > 0.0 {
                            side.add_label(l, z, totals);
                        }
                    }
                    zero_done = true;
                } else {
                    while k < entries.len() && entries[k].0 == v {
                        let i = entries[k].1;
                        let wi = self.weight[i];
                        side.w += wi;
                        for &l in &self.p.labels[i] {
                            side.add_label(l as usize, wi, totals);
                        }
                        k += 1;
                    }
                }
                prev = Some(v);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::Dense(DenseMatrix::from_rows(rows).unwrap())
    }

    fn exact() -> ForestParams {
        ForestParams {
            n_estimators: 1,
            bootstrap: false,
            max_features: MaxFeatures::All,
            ..ForestParams::default()
        }
    }

    #[test]
    fn separable_singleton() {
        let x = fm(&[vec![0.0], vec![1.0]]);
        let y = LabelMatrix::from_rows(&[vec![0], vec![1]]).unwrap();
        let p = ForestParams { max_depth: Some(2), ..exact() };
        let f = fit_random_forest(&x, &y, &p, 1).unwrap();
        let s = f.predict_scores(&x);
        assert_eq!(s.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn single_row_gives_single_leaf() {
        let x = fm(&[vec![1.0, 2.0]]);
        let y = LabelMatrix::from_rows(&[vec![1, 0]]).unwrap();
        let f = fit_random_forest(&x, &y, &exact(), 1).unwrap();
        assert_eq!(f.trees[0].nodes.len(), 1);
        assert_eq!(f.predict_scores(&x).as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn deterministic_without_bootstrap() {
        let x = fm(&[vec![0.1, 5.0], vec![0.4, 1.0], vec![0.3, 2.0], vec![0.9, 0.0], vec![0.5, 3.0]]);
        let y = LabelMatrix::from_rows(&[vec![1, 0], vec![0, 1], vec![1, 1], vec![0, 0], vec![1, 0]]).unwrap();
        let p = ForestParams { n_estimators: 3, ..exact() };
        let a = fit_random_forest(&x, &y, &p, 1).unwrap();
        let b = fit_random_forest(&x, &y, &p, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sparse_and_dense_inputs_agree() {
        let d = DenseMatrix::from_rows(&[
            vec![0.0, 1.0, -2.0],
            vec![3.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 2.0, 0.0],
            vec![0.0, 0.0, -1.0],
            vec![2.0, 0.0, 0.5],
        ])
        .unwrap();
        let y = LabelMatrix::from_rows(&[vec![1, 0], vec![0, 1], vec![1, 1], vec![0, 1], vec![1, 0], vec![0, 0]]).unwrap();
        let p = ForestParams { n_estimators: 4, seed: 3, ..ForestParams::default() };
        let a = fit_random_forest(&FeatureMatrix::Dense(d.clone()), &y, &p, 1).unwrap();
        let b = fit_random_forest(&FeatureMatrix::Sparse(d.to_sparse()), &y, &p, 1).unwrap();
        assert_eq!(a.trees, b.trees);
    }

    #[test]
    fn all_zero_label_scores_zero() {
        let x = fm(&[vec![0.0], vec![1.0], vec![2.0]]);
        let y = LabelMatrix::from_rows(&[vec![0, 1], vec![0, 0], vec![0, 1]]).unwrap();
        for cw in [ClassWeight::None, ClassWeight::Balanced] {
            let p = ForestParams { class_weight: cw, ..exact() };
            let s = fit_random_forest(&x, &y, &p, 1).unwrap().predict_scores(&x);
            assert!((0..3).all(|i| s.get(i, 0) == 0.0));
        }
    }

    #[test]
    fn vote_average() {
        let leaf = |v: f64| Tree {
            nodes: vec![TreeNode::Leaf { values: if v > 0.0 { vec![(0, v)] } else { vec![] } }],
        };
        let f = RandomForest {
            params: ForestParams::default(),
            n_features: 1,
            n_labels: 1,
            trees: vec![leaf(1.0), leaf(1.0), leaf(0.0)],
        };
        let s = f.predict_scores(&fm(&[vec![0.0]]));
        assert!((s.get(0, 0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn matches_per_label_forests_when_structure_is_forced() {
        let x = fm(&[vec![0.0], vec![0.0], vec![1.0], vec![1.0], vec![1.0]]);
        let y = LabelMatrix::from_rows(&[vec![1, 0], vec![0, 0], vec![1, 1], vec![0, 1], vec![1, 1]]).unwrap();
        let p = ForestParams { max_depth: Some(1), ..exact() };
        let joint = fit_random_forest(&x, &y, &p, 1).unwrap().predict_scores(&x);
        for l in 0..2 {
            let yl = LabelMatrix::from_rows(&(0..5).map(|i| vec![u8::from(y.get(i, l))]).collect::<Vec<_>>()).unwrap();
            let single = fit_random_forest(&x, &yl, &p, 1).unwrap().predict_scores(&x);
            for i in 0..5 {
                assert!((joint.get(i, l) - single.get(i, 0)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn min_samples_leaf_is_respected() {
        let x = fm(&(0..10).map(|i| vec![f64::from(i)]).collect::<Vec<_>>());
        let y = LabelMatrix::from_rows(&(0..10).map(|i| vec![u8::from(i == 0)]).collect::<Vec<_>>()).unwrap();
        let p = ForestParams { min_samples_leaf: 3, ..exact() };
        let f = fit_random_forest(&x, &y, &p, 1).unwrap();
        // the lone positive cannot be isolated
        assert!(f.predict_scores(&x).get(0, 0) <= 1.0 / 3.0 + 1e-12);
    }
}
