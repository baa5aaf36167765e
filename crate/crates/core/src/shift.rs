//! Synthetic covariate shift: a probit gate along a random direction decides
//! which rows go to training, and the gate's odds give exact weights.

use ndarray::ArrayView2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::ess::{empirical_ess, WeightVector};
use crate::linalg::{lower_median, sample_std};
use crate::rng::{derive_seed, fork_seed, seeded};

pub const SCORE_CLIP: f64 = 1e-12;
pub const MIN_SIDE_ROWS: usize = 10;
pub const MIN_CALIBRATION_ROWS: usize = 200;
pub const MAX_HALVINGS: usize = 60;

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// i.i.d. Uniform[-1, 1] entries.
pub fn sample_direction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

fn projections(x: ArrayView2<'_, f64>, direction: &[f64]) -> Result<Vec<f64>> {
    if direction.len() != x.ncols() {
        return Err(Error::dim(format!("direction of length {} for {} columns", direction.len(), x.ncols())));
    }
    if direction.iter().all(|&u| u == 0.0) {
        return Err(Error::arg("direction is the zero vector"));
    }
    if x.nrows() == 0 {
        return Err(Error::arg("no rows"));
    }
    Ok(x.outer_iter().map(|r| r.iter().zip(direction).map(|(a, b)| a * b).sum()).collect())
}

fn scores_from_projections(proj: &[f64], sigma: f64) -> Vec<f64> {
    let med = lower_median(proj);
    proj.iter()
        .map(|p| std_normal_cdf((p - med) / sigma).clamp(SCORE_CLIP, 1.0 - SCORE_CLIP))
        .collect()
}

/// `Phi((x . u - median) / sigma)` per row, clipped into `[1e-12, 1 - 1e-12]`.
pub fn compute_scores(x: ArrayView2<'_, f64>, direction: &[f64], sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::arg(format!("sigma must be positive, got {sigma}")));
    }
    Ok(scores_from_projections(&projections(x, direction)?, sigma))
}

/// Row `i` goes to training with probability `scores[i]`.
pub fn allocate<R: Rng + ?Sized>(scores: &[f64], rng: &mut R) -> Vec<bool> {
    scores.iter().map(|&s| rng.gen::<f64>() < s).collect()
}

/// `(1 - s) / s` for each training-row score.
pub fn true_weights(train_scores: &[f64]) -> Result<WeightVector> {
    if let Some(s) = train_scores.iter().find(|&&s| !(s > 0.0 && s < 1.0)) {
        return Err(Error::arg(format!("score {s} outside (0, 1)")));
    }
    WeightVector::new(train_scores.iter().map(|s| (1.0 - s) / s).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftAssignment {
    pub direction: Vec<f64>,
    pub sigma: f64,
    pub scores: Vec<f64>,
    pub is_train: Vec<bool>,
    /// Weights for the training rows, in row order.
    pub true_weights_train: WeightVector,
    pub ess: f64,
    /// Number of halvings applied to the starting sigma.
    pub halvings: usize,
}

impl ShiftAssignment {
    pub fn train_rows(&self) -> Vec<usize> {
        (0..self.is_train.len()).filter(|&i| self.is_train[i]).collect()
    }

    pub fn test_rows(&self) -> Vec<usize> {
        (0..self.is_train.len()).filter(|&i| !self.is_train[i]).collect()
    }
}

/// Halves sigma, starting from the standard deviation of the projections,
/// until the training-side ESS of the true weights falls below `ess_target`
/// with at least [`MIN_SIDE_ROWS`] rows on each side.
pub fn calibrate_sigma<R: Rng + ?Sized>(
    x: ArrayView2<'_, f64>,
    direction: &[f64],
    rng: &mut R,
    ess_target: f64,
) -> Result<ShiftAssignment> {
    let n = x.nrows();
    if n < MIN_CALIBRATION_ROWS {
        return Err(Error::arg(format!("calibration needs at least {MIN_CALIBRATION_ROWS} rows, got {n}")));
    }
    if !(ess_target > 0.0 && ess_target <= 1.0) {
        return Err(Error::arg(format!("ESS target must lie in (0, 1], got {ess_target}")));
    }
    let proj = projections(x, direction)?;
    let sigma0 = sample_std(&proj);
    if !(sigma0 > 0.0) || !sigma0.is_finite() {
        return Err(Error::Calibration("projections have no spread".into()));
    }
    let master = fork_seed(rng);
    let mut last_ess = f64::NAN;
    for halvings in 0..=MAX_HALVINGS {
        let sigma = sigma0 * 0.5f64.powi(halvings as i32);
        let scores = scores_from_projections(&proj, sigma);
        let is_train = allocate(&scores, &mut seeded(derive_seed(master, &[halvings as u64])));
        let n_train = is_train.iter().filter(|&&t| t).count();
        if n_train < MIN_SIDE_ROWS || n - n_train < MIN_SIDE_ROWS {
            continue;
        }
        let train_scores: Vec<f64> = scores.iter().zip(&is_train).filter(|(_, &t)| t).map(|(&s, _)| s).collect();
        let weights = true_weights(&train_scores)?;
        let ess = empirical_ess(&weights);
        last_ess = ess;
        if ess < ess_target {
            return Ok(ShiftAssignment {
                direction: direction.to_vec(),
                sigma,
                scores,
                is_train,
                true_weights_train: weights,
                ess,
                halvings,
            });
        }
    }
    Err(Error::Calibration(format!(
        "ESS target {ess_target} not reached after {MAX_HALVINGS} halvings (last ESS {last_ess})"
    )))
}
