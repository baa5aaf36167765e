//! Exhaustive greedy split oracle shared by the tree tests.

#![allow(dead_code)]

use covshift::data::{Labels, Task};
use covshift::ess::WeightVector;
use covshift::rng::seeded;
use covshift::tree::{evaluate, DecisionTree, Node, Prediction};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

/// Reference tree grown by enumerating every (feature, midpoint) pair at each
/// node and computing side impurities from scratch.
#[derive(Debug)]
pub enum RefNode {
    Split(usize, f64, Box<RefNode>, Box<RefNode>),
    Leaf(Vec<f64>),
}

pub struct Problem {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    pub task: Task,
    pub n_classes: usize,
    pub min_leaf: usize,
}

impl Problem {
    pub fn impurity(&self, rows: &[usize]) -> f64 {
        let wsum: f64 = rows.iter().map(|&i| self.w[i]).sum();
        match self.task {
            Task::Regression => {
                let mean = rows.iter().map(|&i| self.w[i] * self.y[i]).sum::<f64>() / wsum;
                rows.iter().map(|&i| self.w[i] * (self.y[i] - mean).powi(2)).sum()
            }
            Task::Classification => {
                let mut c = vec![0.0; self.n_classes];
                for &i in rows {
                    c[self.y[i] as usize] += self.w[i];
                }
                wsum - c.iter().map(|v| v * v).sum::<f64>() / wsum
            }
        }
    }

    pub fn leaf(&self, rows: &[usize]) -> RefNode {
        let wsum: f64 = rows.iter().map(|&i| self.w[i]).sum();
        match self.task {
            Task::Regression => RefNode::Leaf(vec![rows.iter().map(|&i| self.w[i] * self.y[i]).sum::<f64>() / wsum]),
            Task::Classification => {
                let mut c = vec![0.0; self.n_classes];
                for &i in rows {
                    c[self.y[i] as usize] += self.w[i];
                }
                RefNode::Leaf(c.iter().map(|v| v / wsum).collect())
            }
        }
    }

    pub fn grow(&self, rows: Vec<usize>) -> RefNode {
        let node = self.impurity(&rows);
        if rows.len() < 2 * self.min_leaf || !(node > 0.0) {
            return self.leaf(&rows);
        }
        if self.task == Task::Classification {
            let mut present = vec![false; self.n_classes];
            rows.iter().filter(|&&i| self.w[i] > 0.0).for_each(|&i| present[self.y[i] as usize] = true);
            if present.iter().filter(|&&p| p).count() < 2 {
                return self.leaf(&rows);
            }
        }
        let tol = 1e-12 * node;
        let mut best: Option<(f64, usize, f64)> = None;
        for f in 0..self.x.ncols() {
            let mut vals: Vec<f64> = rows.iter().map(|&i| self.x[[i, f]]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for pair in vals.windows(2) {
                let t = pair[0] + (pair[1] - pair[0]) / 2.0;
                let t = if t < pair[1] { t } else { pair[0] };
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[[i, f]] <= t);
                if l.len() < self.min_leaf || r.len() < self.min_leaf {
                    continue;
                }
                let wl: f64 = l.iter().map(|&i| self.w[i]).sum();
                let wr: f64 = r.iter().map(|&i| self.w[i]).sum();
                if !(wl > 0.0 && wr > 0.0) {
                    continue;
                }
                let gain = node - self.impurity(&l) - self.impurity(&r);
                if gain > best.map_or(0.0, |b| b.0) + tol {
                    best = Some((gain, f, t));
                }
            }
        }
        match best {
            None => self.leaf(&rows),
            Some((_, f, t)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[[i, f]] <= t);
                RefNode::Split(f, t, Box::new(self.grow(l)), Box::new(self.grow(r)))
            }
        }
    }

    pub fn labels(&self) -> Labels {
        match self.task {
            Task::Regression => Labels::Real(self.y.clone()),
            Task::Classification => {
                Labels::Class { ids: self.y.iter().map(|&v| v as usize).collect(), n_classes: self.n_classes }
            }
        }
    }
}

pub fn assert_same(tree: &DecisionTree, id: usize, reference: &RefNode) {
    match (&tree.nodes[id], reference) {
        (Node::Split { feature, threshold, left, right }, RefNode::Split(f, t, l, r)) => {
            assert_eq!((*feature, *threshold), (*f, *t));
            assert_same(tree, *left, l);
            assert_same(tree, *right, r);
        }
        (Node::Leaf { prediction, .. }, RefNode::Leaf(v)) => {
            let got = match prediction {
                Prediction::Value(x) => vec![*x],
                Prediction::Distribution(p) => p.clone(),
            };
            assert_eq!(got.len(), v.len());
            for (a, b) in got.iter().zip(v) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
        (got, want) => panic!("node {id}: {got:?} vs {want:?}"),
    }
}

pub fn random_problem(seed: u64) -> Problem {
    let mut rng = seeded(seed);
    let n = rng.gen_range(5..=30);
    let d = rng.gen_range(1..=3);
    let task = if seed % 2 == 0 { Task::Regression } else { Task::Classification };
    let n_classes = rng.gen_range(2..=3);
    // Coarse grid values produce repeated feature values.
    let x = Array2::from_shape_fn((n, d), |_| (rng.gen_range(0..12) as f64) * 0.5);
    let y = (0..n)
        .map(|_| match task {
            Task::Regression => rng.sample::<f64, _>(StandardNormal),
            Task::Classification => rng.gen_range(0..n_classes) as f64,
        })
        .collect();
    let w = (0..n).map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.1..3.0) }).collect::<Vec<f64>>();
    let mut w = w;
    w[0] = 1.0;
    Problem { x, y, w, task, n_classes, min_leaf: rng.gen_range(1..=4) }
}

pub fn reference_predict(node: &RefNode, row: impl Fn(usize) -> f64 + Copy) -> f64 {
    match node {
        RefNode::Split(f, t, l, r) => reference_predict(if row(*f) <= *t { l } else { r }, row),
        RefNode::Leaf(v) if v.len() == 1 => v[0],
        RefNode::Leaf(v) => v.iter().enumerate().fold((0, f64::NEG_INFINITY), |a, (c, &p)| if p > a.1 { (c, p) } else { a }).0 as f64,
    }
}

pub fn weighted_training_loss(tree: &DecisionTree, p: &Problem) -> f64 {
    let pred = tree.predict(p.x.view()).unwrap();
    evaluate(&pred, &p.y, p.task, Some(&WeightVector::new(p.w.clone()).unwrap())).unwrap()
}
