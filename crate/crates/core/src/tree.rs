//! Weighted CART trees for regression (squared error) and classification
//! (Gini), with cross-validated choice of the minimum leaf size.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Labels, Task};
use crate::error::{Error, Result};
use crate::ess::WeightVector;

/// Candidate minimum leaf sizes for [`tune_min_leaf`].
pub const MIN_LEAF_GRID: [usize; 5] = [5, 15, 25, 40, 50];

/// Gains within this fraction of the node impurity count as ties.
const GAIN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub min_samples_leaf: usize,
    pub task: Task,
    pub max_depth: Option<usize>,
}

impl TreeConfig {
    pub fn new(task: Task, min_samples_leaf: usize) -> Self {
        TreeConfig { min_samples_leaf, task, max_depth: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Prediction {
    Value(f64),
    /// Weighted class distribution.
    Distribution(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { prediction: Prediction, n_rows: usize, weight: f64 },
}

/// Nodes in preorder; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub task: Task,
    pub n_features: usize,
    pub nodes: Vec<Node>,
}

enum Target<'a> {
    Real(&'a [f64]),
    Class(&'a [usize], usize),
}

struct Builder<'a> {
    x: ArrayView2<'a, f64>,
    target: Target<'a>,
    w: &'a [f64],
    config: TreeConfig,
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
    class_buf: Vec<f64>,
}

struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b {
        m
    } else {
        a
    }
}

impl Builder<'_> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let weight: f64 = rows.iter().map(|&i| self.w[i]).sum();
        let prediction = match &self.target {
            Target::Real(y) => Prediction::Value(rows.iter().map(|&i| self.w[i] * y[i]).sum::<f64>() / weight),
            Target::Class(ids, k) => {
                let mut dist = vec![0.0; *k];
                for &i in rows {
                    dist[ids[i]] += self.w[i];
                }
                dist.iter_mut().for_each(|p| *p /= weight);
                Prediction::Distribution(dist)
            }
        };
        self.nodes.push(Node::Leaf { prediction, n_rows: rows.len(), weight });
        self.nodes.len() - 1
    }

    fn best_split(&mut self, sorted: &[Vec<usize>]) -> Option<Candidate> {
        let rows = &sorted[0];
        let n = rows.len();
        let m = self.config.min_samples_leaf;
        let total_w: f64 = rows.iter().map(|&i| self.w[i]).sum();
        let mut best: Option<Candidate> = None;
        match &self.target {
            Target::Real(y) => {
                let mean = rows.iter().map(|&i| self.w[i] * y[i]).sum::<f64>() / total_w;
                let node_ss: f64 = rows.iter().map(|&i| self.w[i] * (y[i] - mean).powi(2)).sum();
                if !(node_ss > 0.0) {
                    return None;
                }
                let tol = GAIN_TOLERANCE * node_ss;
                let total_s: f64 = rows.iter().map(|&i| self.w[i] * (y[i] - mean)).sum();
                let base = total_s * total_s / total_w;
                for (f, order) in sorted.iter().enumerate() {
                    let (mut wl, mut sl) = (0.0, 0.0);
                    for pos in 0..n - 1 {
                        let i = order[pos];
                        wl += self.w[i];
                        sl += self.w[i] * (y[i] - mean);
                        let count = pos + 1;
                        if count < m || n - count < m {
                            continue;
                        }
                        let (a, b) = (self.x[[i, f]], self.x[[order[pos + 1], f]]);
                        if !(a < b) {
                            continue;
                        }
                        let wr = total_w - wl;
                        if !(wl > 0.0) || !(wr > 0.0) {
                            continue;
                        }
                        let sr = total_s - sl;
                        let gain = sl * sl / wl + sr * sr / wr - base;
                        let bar = best.as_ref().map_or(0.0, |c| c.gain) + tol;
                        if gain > bar {
                            best = Some(Candidate { gain, feature: f, threshold: midpoint(a, b) });
                        }
                    }
                }
            }
            Target::Class(ids, k) => {
                let k = *k;
                let mut total = vec![0.0; k];
                for &i in rows {
                    total[ids[i]] += self.w[i];
                }
                let sum_sq = |v: &[f64]| v.iter().map(|c| c * c).sum::<f64>();
                let base = sum_sq(&total) / total_w;
                let node_impurity = total_w - base;
                if !(node_impurity > 0.0) || total.iter().filter(|&&c| c > 0.0).count() < 2 {
                    return None;
                }
                let tol = GAIN_TOLERANCE * node_impurity;
                let left = &mut self.class_buf;
                let mut right = vec![0.0; k];
                for (f, order) in sorted.iter().enumerate() {
                    left.iter_mut().for_each(|c| *c = 0.0);
                    let mut wl = 0.0;
                    for pos in 0..n - 1 {
                        let i = order[pos];
                        wl += self.w[i];
                        left[ids[i]] += self.w[i];
                        let count = pos + 1;
                        if count < m || n - count < m {
                            continue;
                        }
                        let (a, b) = (self.x[[i, f]], self.x[[order[pos + 1], f]]);
                        if !(a < b) {
                            continue;
                        }
                        let wr = total_w - wl;
                        if !(wl > 0.0) || !(wr > 0.0) {
                            continue;
                        }
                        for c in 0..k {
                            right[c] = total[c] - left[c];
                        }
                        let gain = sum_sq(left) / wl + sum_sq(&right) / wr - base;
                        let bar = best.as_ref().map_or(0.0, |c| c.gain) + tol;
                        if gain > bar {
                            best = Some(Candidate { gain, feature: f, threshold: midpoint(a, b) });
                        }
                    }
                }
            }
        }
        best
    }

    /// `sorted[f]` lists the node's rows ordered by feature `f`.
    fn build(&mut self, sorted: Vec<Vec<usize>>, depth: usize) -> usize {
        let n = sorted[0].len();
        let depth_ok = self.config.max_depth.map_or(true, |d| depth < d);
        let split = if depth_ok && n >= 2 * self.config.min_samples_leaf {
            self.best_split(&sorted)
        } else {
            None
        };
        let Some(split) = split else {
            return self.leaf(&sorted[0]);
        };
        for &i in &sorted[0] {
            self.goes_left[i] = self.x[[i, split.feature]] <= split.threshold;
        }
        let (mut lefts, mut rights) = (Vec::with_capacity(sorted.len()), Vec::with_capacity(sorted.len()));
        for order in sorted {
            let (l, r): (Vec<usize>, Vec<usize>) = order.into_iter().partition(|&i| self.goes_left[i]);
            lefts.push(l);
            rights.push(r);
        }
        let id = self.nodes.len();
        self.nodes.push(Node::Split { feature: split.feature, threshold: split.threshold, left: 0, right: 0 });
        let left = self.build(lefts, depth + 1);
        let right = self.build(rights, depth + 1);
        self.nodes[id] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        id
    }
}

fn check_fit_inputs(x: ArrayView2<'_, f64>, labels: &Labels, w: &WeightVector) -> Result<()> {
    let n = x.nrows();
    if labels.len() != n || w.len() != n {
        return Err(Error::dim(format!("{n} rows, {} labels, {} weights", labels.len(), w.len())));
    }
    if n == 0 || x.ncols() == 0 {
        return Err(Error::arg("empty training data"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invariant("non-finite feature value"));
    }
    if !(w.as_slice().iter().sum::<f64>() > 0.0) {
        return Err(Error::arg("all training weights are zero"));
    }
    Ok(())
}

pub fn fit_tree(x: ArrayView2<'_, f64>, labels: &Labels, w: &WeightVector, config: &TreeConfig) -> Result<DecisionTree> {
    check_fit_inputs(x, labels, w)?;
    if config.min_samples_leaf == 0 {
        return Err(Error::arg("min_samples_leaf must be at least 1"));
    }
    let labels = labels.for_task(config.task)?;
    let target = match &labels {
        Labels::Real(y) => {
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::invariant("non-finite label"));
            }
            Target::Real(y)
        }
        Labels::Class { ids, n_classes } => Target::Class(ids, *n_classes),
    };
    let (n, d) = x.dim();
    let sorted: Vec<Vec<usize>> = (0..d)
        .map(|f| {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| x[[a, f]].total_cmp(&x[[b, f]]));
            order
        })
        .collect();
    let n_classes = match &target {
        Target::Class(_, k) => *k,
        Target::Real(_) => 0,
    };
    let mut b = Builder {
        x: x.view(),
        target,
        w: w.as_slice(),
        config: *config,
        nodes: Vec::new(),
        goes_left: vec![false; n],
        class_buf: vec![0.0; n_classes],
    };
    b.build(sorted, 0);
    Ok(DecisionTree { task: config.task, n_features: d, nodes: b.nodes })
}

impl DecisionTree {
    fn leaf_for(&self, row: impl Fn(usize) -> f64) -> &Prediction {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Split { feature, threshold, left, right } => {
                    id = if row(*feature) <= *threshold { *left } else { *right };
                }
                Node::Leaf { prediction, .. } => return prediction,
            }
        }
    }

    /// Leaf value for regression, most probable class id (lowest on ties)
    /// for classification.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let needed = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(feature + 1),
                Node::Leaf { .. } => None,
            })
            .max()
            .unwrap_or(0);
        if x.ncols() < needed {
            return Err(Error::dim(format!("{} columns but the tree uses {needed}", x.ncols())));
        }
        Ok(x.outer_iter()
            .map(|r| match self.leaf_for(|f| r[f]) {
                Prediction::Value(v) => *v,
                Prediction::Distribution(p) => {
                    p.iter()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |acc, (c, &v)| if v > acc.1 { (c, v) } else { acc })
                        .0 as f64
                }
            })
            .collect())
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// Weighted mean squared error or weighted misclassification rate.
pub fn evaluate(predictions: &[f64], truth: &[f64], task: Task, weights: Option<&WeightVector>) -> Result<f64> {
    let n = predictions.len();
    if truth.len() != n || weights.is_some_and(|w| w.len() != n) {
        return Err(Error::dim("predictions, labels and weights must have equal length"));
    }
    if n == 0 {
        return Err(Error::arg("nothing to evaluate"));
    }
    let loss = |p: f64, t: f64| match task {
        Task::Regression => (p - t) * (p - t),
        Task::Classification => f64::from(u8::from(p != t)),
    };
    match weights {
        None => Ok(predictions.iter().zip(truth).map(|(&p, &t)| loss(p, t)).sum::<f64>() / n as f64),
        Some(w) => {
            let total: f64 = w.as_slice().iter().sum();
            if !(total > 0.0) {
                return Err(Error::Numerical("evaluation weights sum to zero".into()));
            }
            Ok(predictions
                .iter()
                .zip(truth)
                .zip(w.as_slice())
                .map(|((&p, &t), &wi)| wi * loss(p, t))
                .sum::<f64>()
                / total)
        }
    }
}

#[derive(Debug, Clone)]
pub struct TunedTree {
    pub tree: DecisionTree,
    pub min_samples_leaf: usize,
    /// Mean held-out score for each grid value.
    pub cv_scores: Vec<(usize, f64)>,
}

/// Two-fold cross-validation over [`MIN_LEAF_GRID`] with weighted held-out
/// scores; ties go to the larger leaf size. The winner is refit on all rows.
pub fn tune_min_leaf<R: Rng + ?Sized>(
    x: ArrayView2<'_, f64>,
    labels: &Labels,
    w: &WeightVector,
    task: Task,
    rng: &mut R,
) -> Result<TunedTree> {
    check_fit_inputs(x, labels, w)?;
    let n = x.nrows();
    if n < 20 {
        return Err(Error::arg(format!("leaf-size tuning needs at least 20 rows, got {n}")));
    }
    let labels = labels.for_task(task)?;
    let truth = labels.as_real();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let folds = [idx[..n / 2].to_vec(), idx[n / 2..].to_vec()];
    let fold_data: Vec<_> = folds
        .iter()
        .map(|rows| {
            let xs = x.select(ndarray::Axis(0), rows);
            let ls = labels.select(rows);
            let ws = w.select(rows)?;
            let ts: Vec<f64> = rows.iter().map(|&i| truth[i]).collect();
            Ok((xs, ls, ws, ts))
        })
        .collect::<Result<_>>()?;
    let mut cv_scores = Vec::with_capacity(MIN_LEAF_GRID.len());
    for &m in &MIN_LEAF_GRID {
        let cfg = TreeConfig::new(task, m);
        let mut score = 0.0;
        for (a, b) in [(0, 1), (1, 0)] {
            let (xa, la, wa, _) = &fold_data[a];
            let (xb, _, wb, tb) = &fold_data[b];
            let tree = fit_tree(xa.view(), la, wa, &cfg)?;
            score += evaluate(&tree.predict(xb.view())?, tb, task, Some(wb))?;
        }
        cv_scores.push((m, score / 2.0));
    }
    let (best, _) = cv_scores
        .iter()
        .copied()
        .fold((0, f64::INFINITY), |acc, (m, s)| if s <= acc.1 { (m, s) } else { acc });
    let tree = fit_tree(x, &labels, w, &TreeConfig::new(task, best))?;
    Ok(TunedTree { tree, min_samples_leaf: best, cv_scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn unit(n: usize) -> WeightVector {
        WeightVector::uniform(n)
    }

    #[test]
    fn constant_labels_give_one_leaf() {
        let x = array![[1.0], [2.0], [3.0]];
        let t = fit_tree(x.view(), &Labels::Real(vec![4.2; 3]), &unit(3), &TreeConfig::new(Task::Regression, 1)).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict(array![[10.0]].view()).unwrap(), vec![4.2]);
    }

    #[test]
    fn step_splits_at_midpoint() {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let y = Labels::Real(vec![0.0, 0.0, 1.0, 1.0]);
        let t = fit_tree(x.view(), &y, &unit(4), &TreeConfig::new(Task::Regression, 1)).unwrap();
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, threshold, .. } if threshold == 2.5));
        assert_eq!(t.predict(array![[2.5], [2.6]].view()).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn fully_grown_tree_memorizes() {
        let x = Array2::from_shape_fn((12, 2), |(i, j)| (i * 7 + j * 3) as f64 % 13.0 + i as f64 * 0.01);
        let y: Vec<f64> = (0..12).map(|i| (i as f64 * 1.7).sin()).collect();
        let t = fit_tree(x.view(), &Labels::Real(y.clone()), &unit(12), &TreeConfig::new(Task::Regression, 1)).unwrap();
        let p = t.predict(x.view()).unwrap();
        assert!(evaluate(&p, &y, Task::Regression, None).unwrap() < 1e-24);
    }

    #[test]
    fn classification_ties_go_to_lowest_class() {
        let x = array![[0.0], [0.0]];
        let labels = Labels::Class { ids: vec![1, 0], n_classes: 2 };
        let t = fit_tree(x.view(), &labels, &unit(2), &TreeConfig::new(Task::Classification, 1)).unwrap();
        assert_eq!(t.predict(x.view()).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn evaluate_cases() {
        assert_eq!(evaluate(&[1.0, 1.0], &[0.0, 2.0], Task::Regression, None).unwrap(), 1.0);
        assert_eq!(evaluate(&[0.0; 4], &[0.0, 1.0, 0.0, 1.0], Task::Classification, None).unwrap(), 0.5);
        assert_eq!(evaluate(&[3.0], &[3.0], Task::Regression, None).unwrap(), 0.0);
        let w = WeightVector::new(vec![3.0, 1.0]).unwrap();
        assert_eq!(evaluate(&[0.0, 0.0], &[0.0, 1.0], Task::Classification, Some(&w)).unwrap(), 0.25);
        assert!(evaluate(&[0.0], &[0.0, 1.0], Task::Regression, None).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = array![[1.0], [2.0]];
        let y = Labels::Real(vec![0.0, 1.0]);
        assert!(WeightVector::new(vec![0.0, 0.0]).is_err());
        assert!(fit_tree(x.view(), &Labels::Real(vec![0.0]), &unit(2), &TreeConfig::new(Task::Regression, 1)).is_err());
        let t = fit_tree(x.view(), &y, &unit(2), &TreeConfig::new(Task::Regression, 1)).unwrap();
        assert!(t.predict(Array2::<f64>::zeros((1, 0)).view()).is_err());
    }

    #[test]
    fn json_round_trip() {
        let x = array![[1.0, 0.0], [2.0, 1.0], [3.0, 0.0], [4.0, 1.0]];
        let labels = Labels::Class { ids: vec![0, 0, 1, 1], n_classes: 2 };
        let t = fit_tree(x.view(), &labels, &unit(4), &TreeConfig::new(Task::Classification, 1)).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        let back: DecisionTree = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }
}
