//! Gradient-boosted regression trees on the logistic loss, one booster per
//! label.
//!
//! Trees grow level by level with exact greedy splits over a shared
//! pre-sorted column index. Implicit zeros of a column form a single value
//! group placed between the negative and positive entries. Leaf weights are
//! Newton steps `-soft(G, alpha) / (H + lambda)`; the label score is
//! `sigmoid(learning_rate * sum of leaf weights)`.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::columns::{midpoint, ColumnIndex};
use super::parallel_map;
use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, FeatureMatrix, LabelMatrix};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
    pub reg_alpha: f64,
    pub reg_lambda: f64,
    pub seed: u64,
    /// Restrict split candidates to this many quantile bins per feature.
    pub quantile_bins: Option<usize>,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            learning_rate: 0.3,
            max_depth: 6,
            subsample: 1.0,
            colsample_bytree: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
            reg_alpha: 0.0,
            reg_lambda: 1.0,
            seed: 0,
            quantile_bins: None,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if self.n_estimators == 0 {
            return Err(Error::invalid("n_estimators must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !unit(self.subsample) || !unit(self.colsample_bytree) {
            return Err(Error::invalid("subsample and colsample_bytree must lie in (0, 1]"));
        }
        if self.gamma < 0.0 || self.min_child_weight < 0.0 || self.reg_alpha < 0.0 || self.reg_lambda < 0.0 {
            return Err(Error::invalid("gamma, min_child_weight, reg_alpha and reg_lambda must be non-negative"));
        }
        if self.quantile_bins == Some(0) {
            return Err(Error::invalid("quantile_bins must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum RegNode {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        weight: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    pub nodes: Vec<RegNode>,
}

impl RegTree {
    pub fn predict_row(&self, x: &FeatureMatrix, row: usize) -> f64 {
        let mut n = 0usize;
        loop {
            match &self.nodes[n] {
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => n = if x.get(row, *feature as usize) <= *threshold { *left } else { *right } as usize,
                RegNode::Leaf { weight } => return *weight,
            }
        }
    }

    /// Leaf weights in node order.
    pub fn leaf_weights(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                RegNode::Leaf { weight } => Some(*weight),
                RegNode::Split { .. } => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelBooster {
    pub trees: Vec<RegTree>,
    /// Fixed score used instead of the trees for a label without positives.
    pub constant: Option<f64>,
    /// Mean training logistic loss before the first and after every round.
    pub training_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    pub params: BoostParams,
    pub n_features: usize,
    pub labels: Vec<LabelBooster>,
    /// Label columns that had no positive training row.
    pub constant_labels: Vec<usize>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn soft_threshold(g: f64, alpha: f64) -> f64 {
    if g > alpha {
        g - alpha
    } else if g < -alpha {
        g + alpha
    } else {
        0.0
    }
}

/// `log(1 + e^-|z|) + max(z, 0) - y z`
fn logistic_loss(z: f64, y: bool) -> f64 {
    (-z.abs()).exp().ln_1p() + z.max(0.0) - if y { z } else { 0.0 }
}

impl GradientBoosting {
    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn margin(&self, x: &FeatureMatrix, row: usize, label: usize) -> f64 {
        let b = &self.labels[label];
        self.params.learning_rate * b.trees.iter().map(|t| t.predict_row(x, row)).sum::<f64>()
    }

    pub fn predict_scores(&self, x: &FeatureMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(x.rows(), self.labels.len());
        for (l, b) in self.labels.iter().enumerate() {
            for i in 0..x.rows() {
                let s = match b.constant {
                    Some(c) => c,
                    None => sigmoid(self.margin(x, i, l)),
                };
                out.set(i, l, s);
            }
        }
        out
    }
}

pub fn fit_gradient_boosting(x: &FeatureMatrix, y: &LabelMatrix, params: &BoostParams, workers: usize) -> Result<GradientBoosting> {
    params.validate()?;
    if x.rows() != y.rows() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            actual: y.rows(),
        });
    }
    if x.rows() == 0 {
        return Err(Error::invalid("cannot fit boosting on zero rows"));
    }
    if !x.all_finite() {
        return Err(Error::invalid("feature matrix contains non-finite values"));
    }
    let mut cols = ColumnIndex::new(x);
    if let Some(b) = params.quantile_bins {
        cols.quantize(b);
    }
    let sums = y.column_sums();
    let labels = parallel_map(y.cols(), workers, |l| {
        if sums[l] == 0 {
            return LabelBooster {
                trees: Vec::new(),
                constant: Some(0.0),
                training_loss: Vec::new(),
            };
        }
        fit_label(x, &cols, &y.column(l), params, rng::derive(params.seed, l as u64))
    });
    let constant_labels = (0..y.cols()).filter(|&l| sums[l] == 0).collect();
    Ok(GradientBoosting {
        params: params.clone(),
        n_features: x.cols(),
        labels,
        constant_labels,
    })
}

const NONE: u32 = u32::MAX;

fn fit_label(x: &FeatureMatrix, cols: &ColumnIndex, y: &[bool], params: &BoostParams, seed: u64) -> LabelBooster {
    let n = x.rows();
    let mut r = rng::seeded(seed);
    let mut margin = vec![0.0; n];
    let mean_loss = |m: &[f64]| m.iter().zip(y).map(|(&z, &t)| logistic_loss(z, t)).sum::<f64>() / n as f64;
    let mut training_loss = vec![mean_loss(&margin)];
    let mut trees = Vec::with_capacity(params.n_estimators);
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let n_rows = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let n_feat = ((params.colsample_bytree * x.cols() as f64).round() as usize).clamp(1, x.cols().max(1));
    for _ in 0..params.n_estimators {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            g[i] = p - if y[i] { 1.0 } else { 0.0 };
            h[i] = p * (1.0 - p);
        }
        let rows: Vec<usize> = if n_rows < n {
            let mut v = index::sample(&mut r, n, n_rows).into_vec();
            v.sort_unstable();
            v
        } else {
            (0..n).collect()
        };
        let features: Vec<usize> = if n_feat < x.cols() {
            let mut v = index::sample(&mut r, x.cols(), n_feat).into_vec();
            v.sort_unstable();
            v
        } else {
            (0..x.cols()).collect()
        };
        let tree = grow_tree(x, cols, &g, &h, &rows, &features, params);
        for (i, m) in margin.iter_mut().enumerate() {
            *m += params.learning_rate * tree.predict_row(x, i);
        }
        training_loss.push(mean_loss(&margin));
        trees.push(tree);
    }
    LabelBooster {
        trees,
        constant: None,
        training_loss,
    }
}

#[derive(Clone)]
struct Open {
    slot: usize,
    g: f64,
    h: f64,
    count: usize,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Running state of one node while a column is scanned.
#[derive(Clone, Copy, Default)]
struct Scan {
    gl: f64,
    hl: f64,
    seen: usize,
    last: Option<f64>,
    zero_done: bool,
    nz_g: f64,
    nz_h: f64,
    nz_count: usize,
}

fn grow_tree(
    x: &FeatureMatrix,
    cols: &ColumnIndex,
    g: &[f64],
    h: &[f64],
    rows: &[usize],
    features: &[usize],
    params: &BoostParams,
) -> RegTree {
    let lambda = params.reg_lambda;
    let alpha = params.reg_alpha;
    let score = |g: f64, h: f64| {
        let t = soft_threshold(g, alpha);
        if h + lambda > 0.0 {
            t * t / (h + lambda)
        } else {
            0.0
        }
    };
    let leaf = |g: f64, h: f64| {
        if h + lambda > 0.0 {
            -soft_threshold(g, alpha) / (h + lambda)
        } else {
            0.0
        }
    };

    let mut pos = vec![NONE; x.rows()];
    for &i in rows {
        pos[i] = 0;
    }
    let mut nodes = vec![RegNode::Leaf { weight: 0.0 }];
    let mut level = vec![Open {
        slot: 0,
        g: rows.iter().map(|&i| g[i]).sum(),
        h: rows.iter().map(|&i| h[i]).sum(),
        count: rows.len(),
    }];

    for _depth in 0..params.max_depth {
        if level.is_empty() {
            break;
        }
        let mut best: Vec<Option<Candidate>> = vec![None; level.len()];
        let mut scan = vec![Scan::default(); level.len()];
        for &f in features {
            let (cr, cv) = cols.column(f);
            if cr.is_empty() {
                continue;
            }
            scan.iter_mut().for_each(|s| *s = Scan::default());
            for &rr in cr {
                let p = pos[rr as usize];
                if p != NONE {
                    let s = &mut scan[p as usize];
                    s.nz_g += g[rr as usize];
                    s.nz_h += h[rr as usize];
                    s.nz_count += 1;
                }
            }
            let consider = |k: usize, s: &Scan, next: f64, best: &mut Vec<Option<Candidate>>| {
                let node = &level[k];
                let Some(last) = s.last else { return };
                if next <= last {
                    return;
                }
                let (gl, hl) = (s.gl, s.hl);
                let (gr, hr) = (node.g - gl, node.h - hl);
                if hl < params.min_child_weight || hr < params.min_child_weight {
                    return;
                }
                let gain = 0.5 * (score(gl, hl) + score(gr, hr) - score(node.g, node.h)) - params.gamma;
                if gain > 0.0 && best[k].is_none_or(|b| gain > b.gain) {
                    best[k] = Some(Candidate {
                        gain,
                        feature: f,
                        threshold: midpoint(last, next),
                    });
                }
            };
            for (&rr, &v) in cr.iter().zip(cv) {
                let p = pos[rr as usize];
                if p == NONE {
                    continue;
                }
                let k = p as usize;
                let mut s = scan[k];
                if !s.zero_done && v > 0.0 {
                    if s.nz_count < level[k].count {
                        consider(k, &s, 0.0, &mut best);
                        s.gl += level[k].g - s.nz_g;
                        s.hl += level[k].h - s.nz_h;
                        s.seen += level[k].count - s.nz_count;
                        s.last = Some(0.0);
                    }
                    s.zero_done = true;
                }
                consider(k, &s, v, &mut best);
                s.gl += g[rr as usize];
                s.hl += h[rr as usize];
                s.seen += 1;
                s.last = Some(v);
                scan[k] = s;
            }
            // nodes whose entries are all negative: the zero block comes last
            for k in 0..level.len() {
                let s = scan[k];
                if !s.zero_done && s.nz_count < level[k].count && s.nz_count > 0 {
                    consider(k, &s, 0.0, &mut best);
                }
            }
        }

        let mut next_level = Vec::new();
        let mut child_of: Vec<Option<(u32, u32, usize, f64)>> = vec![None; level.len()];
        for (k, node) in level.iter().enumerate() {
            if let Some(c) = best[k] {
                let l = nodes.len();
                nodes.push(RegNode::Leaf { weight: 0.0 });
                nodes.push(RegNode::Leaf { weight: 0.0 });
                nodes[node.slot] = RegNode::Split {
                    feature: c.feature as u32,
                    threshold: c.threshold,
                    left: l as u32,
                    right: (l + 1) as u32,
                };
                let base = next_level.len() as u32;
                next_level.push(Open { slot: l, g: 0.0, h: 0.0, count: 0 });
                next_level.push(Open { slot: l + 1, g: 0.0, h: 0.0, count: 0 });
                child_of[k] = Some((base, base + 1, c.feature, c.threshold));
            } else {
                nodes[node.slot] = RegNode::Leaf { weight: leaf(node.g, node.h) };
            }
        }
        for &i in rows {
            let p = pos[i];
            if p == NONE {
                continue;
            }
            pos[i] = match child_of[p as usize] {
                Some((lc, rc, f, t)) => {
                    let c = if x.get(i, f) <= t { lc } else { rc };
                    let o = &mut next_level[c as usize];
                    o.g += g[i];
                    o.h += h[i];
                    o.count += 1;
                    c
                }
                None => NONE,
            };
        }
        level = next_level;
    }
    for node in &level {
        nodes[node.slot] = RegNode::Leaf { weight: leaf(node.g, node.h) };
    }
    RegTree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::Dense(DenseMatrix::from_rows(rows).unwrap())
    }

    fn ys(v: &[u8]) -> LabelMatrix {
        LabelMatrix::from_rows(&v.iter().map(|&b| vec![b]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn first_round_leaf_weights_are_newton_steps() {
        let x = fm(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        let y = ys(&[0, 0, 1, 1]);
        let p = BoostParams {
            n_estimators: 1,
            max_depth: 1,
            min_child_weight: 0.0,
            reg_lambda: 1.0,
            ..BoostParams::default()
        };
        let m = fit_gradient_boosting(&x, &y, &p, 1).unwrap();
        let w = m.labels[0].trees[0].leaf_weights();
        // at margin 0: g = 0.5 - y, h = 0.25
        let left = -(0.5 + 0.5) / (0.25 + 0.25 + 1.0);
        let right = -(-0.5 - 0.5) / (0.25 + 0.25 + 1.0);
        assert!((w[0] - left).abs() < 1e-12 && (w[1] - right).abs() < 1e-12);
    }

    #[test]
    fn thresholdable_feature_is_learned() {
        let x = fm(&(0..40).map(|i| vec![f64::from(i)]).collect::<Vec<_>>());
        let y = ys(&(0..40).map(|i| u8::from(i >= 15)).collect::<Vec<_>>());
        let p = BoostParams { n_estimators: 10, learning_rate: 0.3, ..BoostParams::default() };
        let m = fit_gradient_boosting(&x, &y, &p, 1).unwrap();
        let s = m.predict_scores(&x);
        for i in 0..40 {
            assert_eq!(s.get(i, 0) >= 0.5, y.get(i, 0));
        }
    }

    #[test]
    fn huge_lambda_gives_half() {
        let x = fm(&[vec![0.0], vec![1.0], vec![2.0]]);
        let y = ys(&[0, 1, 1]);
        let p = BoostParams { reg_lambda: 1e9, n_estimators: 5, ..BoostParams::default() };
        let s = fit_gradient_boosting(&x, &y, &p, 1).unwrap().predict_scores(&x);
        assert!(s.as_slice().iter().all(|v| (v - 0.5).abs() < 1e-8));
    }

    #[test]
    fn huge_gamma_gives_stumps_at_base_rate() {
        let x = fm(&(0..10).map(|i| vec![f64::from(i)]).collect::<Vec<_>>());
        let y = ys(&[1, 0, 0, 1, 0, 0, 0, 0, 1, 0]);
        let p = BoostParams { gamma: 1e6, n_estimators: 300, reg_lambda: 0.0, learning_rate: 0.3, ..BoostParams::default() };
        let m = fit_gradient_boosting(&x, &y, &p, 1).unwrap();
        assert!(m.labels[0].trees.iter().all(|t| t.nodes.len() == 1));
        let s = m.predict_scores(&x);
        assert!((s.get(0, 0) - 0.3).abs() < 1e-6);
    }

    #[test]
    fn loss_never_increases_with_full_sampling() {
        let x = fm(&[vec![0.3, 1.0], vec![0.1, 0.0], vec![0.7, 2.0], vec![0.2, 0.0], vec![0.9, 1.0], vec![0.5, 0.0]]);
        let y = LabelMatrix::from_rows(&[vec![1, 0], vec![0, 0], vec![1, 1], vec![0, 1], vec![1, 0], vec![0, 1]]).unwrap();
        let p = BoostParams { n_estimators: 30, max_depth: 2, ..BoostParams::default() };
        let m = fit_gradient_boosting(&x, &y, &p, 1).unwrap();
        for b in &m.labels {
            for w in b.training_loss.windows(2) {
                assert!(w[1] <= w[0] + 1e-15);
            }
        }
    }

    #[test]
    fn zero_positive_label_is_constant_and_flagged() {
        let x = fm(&[vec![0.0], vec![1.0]]);
        let y = LabelMatrix::from_rows(&[vec![0, 1], vec![0, 0]]).unwrap();
        let m = fit_gradient_boosting(&x, &y, &BoostParams::default(), 1).unwrap();
        assert_eq!(m.constant_labels, vec![0]);
        let s = m.predict_scores(&x);
        assert_eq!((s.get(0, 0), s.get(1, 0)), (0.0, 0.0));
    }

    #[test]
    fn non_finite_features_rejected() {
        let x = fm(&[vec![f64::NAN], vec![1.0]]);
        assert!(fit_gradient_boosting(&x, &ys(&[0, 1]), &BoostParams::default(), 1).is_err());
    }

    #[test]
    fn sparse_zero_group_matches_dense() {
        let d = DenseMatrix::from_rows(&[
            vec![-1.0, 0.0],
            vec![0.0, 2.0],
            vec![0.0, 0.0],
            vec![2.0, 1.0],
            vec![-3.0, 0.0],
            vec![0.0, 3.0],
        ])
        .unwrap();
        let y = LabelMatrix::from_rows(&[vec![1], vec![0], vec![0], vec![1], vec![1], vec![0]]).unwrap();
        let p = BoostParams { n_estimators: 5, max_depth: 3, subsample: 0.8, colsample_bytree: 0.5, seed: 4, ..BoostParams::default() };
        let a = fit_gradient_boosting(&FeatureMatrix::Dense(d.clone()), &y, &p, 1).unwrap();
        let b = fit_gradient_boosting(&FeatureMatrix::Sparse(d.to_sparse()), &y, &p, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quantile_bins_limit_thresholds() {
        let x = fm(&(1..=20).map(|i| vec![f64::from(i)]).collect::<Vec<_>>());
        let y = ys(&(0..20).map(|i| u8::from(i % 3 == 0)).collect::<Vec<_>>());
        let p = BoostParams { quantile_bins: Some(2), n_estimators: 3, min_child_weight: 0.0, ..BoostParams::default() };
        let m = fit_gradient_boosting(&x, &y, &p, 1).unwrap();
        for t in &m.labels[0].trees {
            for n in &t.nodes {
                if let RegNode::Split { threshold, .. } = n {
                    assert_eq!(*threshold, 15.0);
                }
            }
        }
    }
}
