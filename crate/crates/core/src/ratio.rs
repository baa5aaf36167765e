//! Importance weights from a source-vs-target classifier.
//!
//! Source rows get label 0 and target rows label 1. A tuned L1 logistic model
//! on standardized quadratic features estimates `P(target | x)`, and Bayes'
//! rule turns the odds into the density ratio:
//! `p_target(x) / p_source(x) = (n_source / n_target) * P(t|x) / (1 - P(t|x))`.

use ndarray::{concatenate, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::ScalerParams;
use crate::error::{Error, Result};
use crate::ess::WeightVector;
use crate::logistic::{expand_quadratic, predict_proba, tune_l1_logistic, ExpansionSpec, LogisticModel, TuningConfig};

/// Probabilities are clipped to `[PROB_CLIP, 1 - PROB_CLIP]` before taking odds.
pub const PROB_CLIP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioModel {
    pub logistic: LogisticModel,
    pub expansion: ExpansionSpec,
    pub expansion_scaler: ScalerParams,
    /// `n_source / n_target` of the training stack.
    pub prior_ratio: f64,
    /// Width of the raw features before expansion.
    pub input_width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioFitSummary {
    pub chosen_c: f64,
    pub holdout_log_loss: f64,
    pub grid_losses: Vec<(f64, f64)>,
    pub n_source: usize,
    pub n_target: usize,
}

pub fn fit_density_ratio<'a, R: Rng + ?Sized>(
    source: ArrayView2<'a, f64>,
    target: ArrayView2<'a, f64>,
    tuning: &TuningConfig,
    rng: &mut R,
) -> Result<(RatioModel, RatioFitSummary)> {
    if source.nrows() == 0 || target.nrows() == 0 {
        return Err(Error::arg("source and target must both be non-empty"));
    }
    if source.ncols() != target.ncols() {
        return Err(Error::dim(format!(
            "source width {} differs from target width {}",
            source.ncols(),
            target.ncols()
        )));
    }
    let expansion = ExpansionSpec::default();
    let stacked = concatenate(Axis(0), &[source, target]).expect("widths checked above");
    let expanded = expand_quadratic(stacked.view(), &expansion);
    let scaler = ScalerParams::fit(expanded.view())?;
    let z = scaler.transform(expanded.view())?;
    let labels: Vec<u8> = std::iter::repeat(0u8)
        .take(source.nrows())
        .chain(std::iter::repeat(1u8).take(target.nrows()))
        .collect();
    let tuned = tune_l1_logistic(z.view(), &labels, tuning, rng)?;
    let model = RatioModel {
        logistic: tuned.model,
        expansion,
        expansion_scaler: scaler,
        prior_ratio: source.nrows() as f64 / target.nrows() as f64,
        input_width: source.ncols(),
    };
    let summary = RatioFitSummary {
        chosen_c: tuned.chosen_c,
        holdout_log_loss: tuned.holdout_log_loss,
        grid_losses: tuned.grid_losses,
        n_source: source.nrows(),
        n_target: target.nrows(),
    };
    Ok((model, summary))
}

/// Odds conversion of a single target probability.
pub fn weight_from_probability(p: f64, prior_ratio: f64) -> f64 {
    let p = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
    prior_ratio * p / (1.0 - p)
}

pub fn predict_weights(model: &RatioModel, features: ArrayView2<'_, f64>) -> Result<WeightVector> {
    if features.ncols() != model.input_width {
        return Err(Error::dim(format!(
            "ratio model trained on width {}, got {}",
            model.input_width,
            features.ncols()
        )));
    }
    let expanded = expand_quadratic(features, &model.expansion);
    let z = model.expansion_scaler.transform(expanded.view())?;
    let p = predict_proba(&model.logistic, z.view())?;
    WeightVector::new(p.into_iter().map(|p| weight_from_probability(p, model.prior_ratio)).collect())
}
