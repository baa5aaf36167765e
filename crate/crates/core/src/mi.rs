//! Plug-in mutual information from fitted mixtures, and greedy feature
//! search driven by it.

use ndarray::{concatenate, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Labels;
use crate::error::{Error, Result};
use crate::gmm::{marginalize, select_components, SelectConfig, MIN_SELECTION_ROWS};
use crate::linalg::log_sum_exp;
use crate::rng::{derive_seed, fork_seed, seeded};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiConfig {
    /// Minimum gain relative to the previous level needed to keep going.
    pub improvement_threshold: f64,
    pub max_features: usize,
    pub selection: SelectConfig,
}

impl Default for MiConfig {
    fn default() -> Self {
        MiConfig { improvement_threshold: 0.01, max_features: 15, selection: SelectConfig::default() }
    }
}

impl MiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.improvement_threshold > 0.0) || !self.improvement_threshold.is_finite() {
            return Err(Error::arg(format!(
                "improvement threshold must be positive, got {}",
                self.improvement_threshold
            )));
        }
        if self.max_features == 0 {
            return Err(Error::arg("max_features must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    RelativeImprovement,
    MaxFeatures,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected: Vec<usize>,
    /// Forward search: the estimate after each inclusion. Backward search:
    /// the estimate of the full set followed by the estimate after each removal.
    pub mi_trajectory: Vec<f64>,
    pub stop_reason: StopReason,
}

fn floor_level(v: f64) -> f64 {
    v.max(1e-12)
}

/// `(1/n) sum [log q(x, y) - log q(x) - log q(y)]` under a joint mixture
/// fitted to `[x | y]`.
pub fn estimate_mi_regression<'a, R: Rng + ?Sized>(
    x: ArrayView2<'a, f64>,
    y: &'a [f64],
    rng: &mut R,
    config: &SelectConfig,
) -> Result<f64> {
    let (n, q) = x.dim();
    if q == 0 {
        return Err(Error::arg("no feature columns"));
    }
    if y.len() != n {
        return Err(Error::dim(format!("{n} rows but {} labels", y.len())));
    }
    let yc = ArrayView2::from_shape((n, 1), y).expect("column view");
    let joint = concatenate(Axis(1), &[x, yc]).expect("matching rows");
    let g = select_components(joint.view(), rng, config)?.mixture;
    let gx = marginalize(&g, &(0..q).collect::<Vec<_>>())?;
    let gy = marginalize(&g, &[q])?;
    let lj = g.log_density_rows(joint.view())?;
    let lx = gx.log_density_rows(x)?;
    let ly = gy.log_density_rows(yc)?;
    let total: f64 = (0..n).map(|i| lj[i] - lx[i] - ly[i]).sum();
    Ok(total / n as f64)
}

/// `(1/n) sum [log q(x | y) - log sum_c P(c) q(x | c)]` with one mixture per
/// class and empirical class priors.
pub fn estimate_mi_classification<R: Rng + ?Sized>(
    x: ArrayView2<'_, f64>,
    ids: &[usize],
    n_classes: usize,
    rng: &mut R,
    config: &SelectConfig,
) -> Result<f64> {
    let (n, q) = x.dim();
    if q == 0 {
        return Err(Error::arg("no feature columns"));
    }
    if ids.len() != n {
        return Err(Error::dim(format!("{n} rows but {} labels", ids.len())));
    }
    if let Some(&c) = ids.iter().find(|&&c| c >= n_classes) {
        return Err(Error::arg(format!("class id {c} outside 0..{n_classes}")));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in ids.iter().enumerate() {
        members[c].push(i);
    }
    if n_classes < 2 {
        return Err(Error::arg("classification needs at least two classes"));
    }
    for (c, m) in members.iter().enumerate() {
        if m.len() < MIN_SELECTION_ROWS {
            return Err(Error::arg(format!(
                "class {c} has {} rows; each class needs at least {MIN_SELECTION_ROWS}",
                m.len()
            )));
        }
    }
    let master = fork_seed(rng);
    let mut cond = vec![0.0; n * n_classes];
    let mut log_prior = Vec::with_capacity(n_classes);
    for (c, m) in members.iter().enumerate() {
        let xc = x.select(Axis(0), m);
        let g = select_components(xc.view(), &mut seeded(derive_seed(master, &[c as u64])), config)?.mixture;
        for (i, v) in g.log_density_rows(x)?.into_iter().enumerate() {
            cond[i * n_classes + c] = v;
        }
        log_prior.push((m.len() as f64 / n as f64).ln());
    }
    let mut terms = vec![0.0; n_classes];
    let mut total = 0.0;
    for i in 0..n {
        let row = &cond[i * n_classes..(i + 1) * n_classes];
        for c in 0..n_classes {
            terms[c] = log_prior[c] + row[c];
        }
        total += row[ids[i]] - log_sum_exp(&terms);
    }
    Ok(total / n as f64)
}

/// Estimate for the columns `subset` (any order) with the mixture seed derived
/// from `master` and the sorted subset, so the value does not depend on the
/// order in which candidates are visited.
pub fn estimate_subset_mi(
    x: ArrayView2<'_, f64>,
    labels: &Labels,
    subset: &[usize],
    master: u64,
    config: &SelectConfig,
) -> Result<f64> {
    let mut key: Vec<u64> = subset.iter().map(|&c| c as u64).collect();
    key.sort_unstable();
    let mut rng = seeded(derive_seed(master, &key));
    let xs = x.select(Axis(1), subset);
    match labels {
        Labels::Real(y) => estimate_mi_regression(xs.view(), y, &mut rng, config),
        Labels::Class { ids, n_classes } => estimate_mi_classification(xs.view(), ids, *n_classes, &mut rng, config),
    }
}

fn check_inputs(x: ArrayView2<'_, f64>, labels: &Labels, config: &MiConfig) -> Result<()> {
    config.validate()?;
    if labels.len() != x.nrows() {
        return Err(Error::dim(format!("{} rows but {} labels", x.nrows(), labels.len())));
    }
    if x.ncols() == 0 {
        return Err(Error::arg("no feature columns"));
    }
    Ok(())
}

/// Best candidate by estimate; ties go to the earlier candidate.
fn best_of(scores: &[(usize, f64)]) -> (usize, f64) {
    scores
        .iter()
        .copied()
        .fold((usize::MAX, f64::NEG_INFINITY), |acc, s| if s.1 > acc.1 || acc.0 == usize::MAX { s } else { acc })
}

/// Greedy forward search. Regression or classification follows the label
/// type. A candidate whose gain fails the stopping test is not added.
pub fn forward_select<R: Rng + ?Sized>(
    x: ArrayView2<'_, f64>,
    labels: &Labels,
    config: &MiConfig,
    rng: &mut R,
) -> Result<SelectionResult> {
    check_inputs(x, labels, config)?;
    let d = x.ncols();
    let master = fork_seed(rng);
    let mut selected: Vec<usize> = Vec::new();
    let mut trajectory: Vec<f64> = Vec::new();
    let stop_reason = loop {
        if selected.len() == d {
            break StopReason::Exhausted;
        }
        if selected.len() >= config.max_features {
            break StopReason::MaxFeatures;
        }
        let candidates: Vec<usize> = (0..d).filter(|c| !selected.contains(c)).collect();
        let scores = candidates
            .par_iter()
            .map(|&c| {
                let mut subset = selected.clone();
                subset.push(c);
                estimate_subset_mi(x, labels, &subset, master, &config.selection).map(|v| (c, v))
            })
            .collect::<Result<Vec<_>>>()?;
        let (best, value) = best_of(&scores);
        if let Some(&prev) = trajectory.last() {
            let gain = value - prev;
            if gain <= 0.0 || gain / floor_level(prev) < config.improvement_threshold {
                break StopReason::RelativeImprovement;
            }
        }
        selected.push(best);
        trajectory.push(value);
    };
    Ok(SelectionResult { selected, mi_trajectory: trajectory, stop_reason })
}

/// Starts from all features and drops, one at a time, the feature whose
/// removal costs the least, until every removal would cost at least
/// `improvement_threshold` times the current level or one feature remains.
pub fn backward_eliminate<R: Rng + ?Sized>(
    x: ArrayView2<'_, f64>,
    labels: &Labels,
    config: &MiConfig,
    rng: &mut R,
) -> Result<SelectionResult> {
    check_inputs(x, labels, config)?;
    let d = x.ncols();
    if d < 2 {
        return Err(Error::arg("backward elimination needs at least two features"));
    }
    let master = fork_seed(rng);
    let mut current: Vec<usize> = (0..d).collect();
    let mut level = estimate_subset_mi(x, labels, &current, master, &config.selection)?;
    let mut trajectory = vec![level];
    let stop_reason = loop {
        if current.len() == 1 {
            break StopReason::Exhausted;
        }
        let scores = current
            .par_iter()
            .map(|&c| {
                let rest: Vec<usize> = current.iter().copied().filter(|&o| o != c).collect();
                estimate_subset_mi(x, labels, &rest, master, &config.selection).map(|v| (c, v))
            })
            .collect::<Result<Vec<_>>>()?;
        let (drop, value) = best_of(&scores);
        if level - value >= config.improvement_threshold * floor_level(level) {
            break StopReason::RelativeImprovement;
        }
        current.retain(|&c| c != drop);
        level = value;
        trajectory.push(level);
    };
    Ok(SelectionResult { selected: current, mi_trajectory: trajectory, stop_reason })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::Array2;
    use rand_distr::StandardNormal;

    fn gaussian_pair(n: usize, rho: f64, seed: u64) -> (Array2<f64>, Vec<f64>) {
        let mut rng = seeded(seed);
        let x = Array2::from_shape_fn((n, 1), |_| rng.sample::<f64, _>(StandardNormal));
        let y = x
            .column(0)
            .iter()
            .map(|v| rho * v + (1.0 - rho * rho).sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        (x, y)
    }

    #[test]
    fn correlated_gaussian_matches_closed_form() {
        let (x, y) = gaussian_pair(5000, 0.8, 11);
        let mi = estimate_mi_regression(x.view(), &y, &mut seeded(1), &SelectConfig::default()).unwrap();
        assert!((mi - 0.510_825_623_765_990_7).abs() <= 0.07, "{mi}");
    }

    #[test]
    fn independent_labels_give_near_zero() {
        let (x, y) = gaussian_pair(5000, 0.0, 12);
        let mi = estimate_mi_regression(x.view(), &y, &mut seeded(2), &SelectConfig::default()).unwrap();
        assert!(mi.abs() <= 0.03, "{mi}");
        let ids: Vec<usize> = (0..5000).map(|i| i % 2).collect();
        let mi_c = estimate_mi_classification(x.view(), &ids, 2, &mut seeded(3), &SelectConfig::default()).unwrap();
        assert!(mi_c.abs() <= 0.03, "{mi_c}");
    }

    /// `ln 2 - E[ln(1 + exp(-6|x|... ))]` for the balanced two-class problem
    /// with means +-3, by Simpson integration of the exact mixture.
    fn two_class_mi_oracle() -> f64 {
        let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        // I = sum_c 0.5 * int phi(x - mu_c) ln(phi(x - mu_c) / p(x)) dx
        let integrand = |x: f64| {
            let a = phi(x - 3.0);
            let b = phi(x + 3.0);
            let p = 0.5 * a + 0.5 * b;
            let mut s = 0.0;
            if a > 0.0 {
                s += 0.5 * a * (a / p).ln();
            }
            if b > 0.0 {
                s += 0.5 * b * (b / p).ln();
            }
            s
        };
        let (lo, hi, m) = (-15.0, 15.0, 6000);
        let h = (hi - lo) / m as f64;
        let mut s = integrand(lo) + integrand(hi);
        for i in 1..m {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * integrand(lo + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn separated_classes_approach_label_entropy() {
        let oracle = two_class_mi_oracle();
        assert!((oracle - std::f64::consts::LN_2).abs() < 0.01);
        let mut rng = seeded(13);
        let ids: Vec<usize> = (0..5000).map(|i| i % 2).collect();
        let x = Array2::from_shape_fn((5000, 1), |(i, _)| {
            (if ids[i] == 0 { -3.0 } else { 3.0 }) + rng.sample::<f64, _>(StandardNormal)
        });
        let mi = estimate_mi_classification(x.view(), &ids, 2, &mut seeded(4), &SelectConfig::default()).unwrap();
        assert!((mi - oracle).abs() <= 0.05, "{mi} vs {oracle}");
        assert!((mi - std::f64::consts::LN_2).abs() <= 0.05);
    }

    #[test]
    fn classification_rejects_small_or_single_class() {
        let x = Array2::from_shape_fn((100, 1), |(i, _)| i as f64);
        let cfg = SelectConfig::default();
        assert!(estimate_mi_classification(x.view(), &vec![0; 100], 1, &mut seeded(1), &cfg).is_err());
        let mut ids = vec![0; 100];
        ids[..10].iter_mut().for_each(|c| *c = 1);
        assert!(estimate_mi_classification(x.view(), &ids, 2, &mut seeded(1), &cfg).is_err());
    }

    #[test]
    fn regression_needs_thirty_rows() {
        let (x, y) = gaussian_pair(29, 0.5, 1);
        assert!(estimate_mi_regression(x.view(), &y, &mut seeded(1), &SelectConfig::default()).is_err());
    }

    #[test]
    fn exact_copy_gives_large_estimate() {
        let (x, _) = gaussian_pair(2000, 0.0, 14);
        let y: Vec<f64> = x.column(0).to_vec();
        let mi = estimate_mi_regression(x.view(), &y, &mut seeded(5), &SelectConfig::default()).unwrap();
        assert!(mi > 2.0, "{mi}");
    }

    #[test]
    fn single_feature_is_exhausted() {
        let (x, y) = gaussian_pair(300, 0.8, 15);
        let r = forward_select(x.view(), &Labels::Real(y), &MiConfig::default(), &mut seeded(6)).unwrap();
        assert_eq!(r.selected, vec![0]);
        assert_eq!(r.stop_reason, StopReason::Exhausted);
        assert_eq!(r.mi_trajectory.len(), 1);
    }

    #[test]
    fn column_order_does_not_change_estimate() {
        let mut rng = seeded(16);
        let x = Array2::from_shape_fn((800, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let y: Vec<f64> = x.outer_iter().map(|r| r[0] + 0.5 * r[2] + rng.sample::<f64, _>(StandardNormal)).collect();
        let labels = Labels::Real(y);
        let cfg = SelectConfig::default();
        let a = estimate_subset_mi(x.view(), &labels, &[0, 1, 2], 9, &cfg).unwrap();
        let b = estimate_subset_mi(x.view(), &labels, &[2, 0, 1], 9, &cfg).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn config_validation() {
        let bad = MiConfig { improvement_threshold: 0.0, ..MiConfig::default() };
        assert!(bad.validate().is_err());
        let bad = MiConfig { max_features: 0, ..MiConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn stop_reason_names() {
        assert_eq!(serde_json::to_string(&StopReason::RelativeImprovement).unwrap(), "\"relative-improvement\"");
    }
}
