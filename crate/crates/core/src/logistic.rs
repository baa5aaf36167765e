//! Binary logistic regression with an L1 penalty on the coefficients and a
//! free intercept.
//!
//! The objective is
//!
//! ```text
//! F(beta, b) = (1/n) sum_i [log(1 + e^{z_i}) - y_i z_i] + |beta|_1 / (n C),   z = b + X beta
//! ```
//!
//! so `C` behaves like the usual inverse regularization strength. It is
//! minimized with accelerated proximal gradient (soft thresholding) under a
//! backtracking line search. Whenever the accelerated candidate would raise
//! the objective the momentum is reset and a plain proximal step is taken
//! instead, which keeps the accepted objective values non-increasing.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub reg_c: f64,
}

impl LogisticModel {
    pub fn zeros(m: usize, reg_c: f64) -> Self {
        LogisticModel { coefficients: vec![0.0; m], intercept: 0.0, reg_c }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionSpec {
    pub degree: u8,
    pub include_interactions: bool,
    pub include_bias_column: bool,
}

impl Default for ExpansionSpec {
    fn default() -> Self {
        ExpansionSpec { degree: 2, include_interactions: true, include_bias_column: false }
    }
}

impl ExpansionSpec {
    pub fn output_width(&self, d: usize) -> usize {
        let second = if self.include_interactions { d * (d + 1) / 2 } else { d };
        usize::from(self.include_bias_column) + d + second
    }
}

/// Columns `[1?, x_1..x_d, x_1^2, x_1 x_2, ..., x_d^2]`, pairs `i <= j` in
/// lexicographic order (only squares when interactions are off).
pub fn expand_quadratic(features: ArrayView2<'_, f64>, spec: &ExpansionSpec) -> Array2<f64> {
    assert_eq!(spec.degree, 2, "only quadratic expansion is supported");
    let (n, d) = features.dim();
    let m = spec.output_width(d);
    let mut out = Array2::<f64>::zeros((n, m));
    for (row, mut dst) in features.outer_iter().zip(out.outer_iter_mut()) {
        let mut k = 0;
        if spec.include_bias_column {
            dst[k] = 1.0;
            k += 1;
        }
        for j in 0..d {
            dst[k] = row[j];
            k += 1;
        }
        for i in 0..d {
            if spec.include_interactions {
                for j in i..d {
                    dst[k] = row[i] * row[j];
                    k += 1;
                }
            } else {
                dst[k] = row[i] * row[i];
                k += 1;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Stop when the relative objective change of an accepted step falls below this.
    pub rel_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { max_iter: 2000, rel_tol: 1e-8 }
    }
}

/// Outcome of one solver run.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub model: LogisticModel,
    /// Objective after every accepted step, starting with the initial point.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Smooth part evaluated from linear scores `z`.
fn smooth_loss(z: &[f64], y: &[f64]) -> f64 {
    z.iter().zip(y).map(|(&zi, &yi)| softplus(zi) - yi * zi).sum::<f64>() / z.len() as f64
}

fn matvec(x: ArrayView2<'_, f64>, beta: &[f64], b: f64, out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(x.outer_iter()) {
        *o = b + row.iter().zip(beta).map(|(a, c)| a * c).sum::<f64>();
    }
}

/// Gradient of the smooth part given scores `z`: returns (d/d beta, d/d b).
fn smooth_gradient(x: ArrayView2<'_, f64>, z: &[f64], y: &[f64], g: &mut [f64]) -> f64 {
    let n = z.len() as f64;
    g.iter_mut().for_each(|v| *v = 0.0);
    let mut gb = 0.0;
    for ((row, &zi), &yi) in x.outer_iter().zip(z).zip(y) {
        let r = sigmoid(zi) - yi;
        gb += r;
        for (gj, xj) in g.iter_mut().zip(row.iter()) {
            *gj += r * xj;
        }
    }
    g.iter_mut().for_each(|v| *v /= n);
    gb / n
}

/// Gradient of the smooth part of the objective at `model`, in the order
/// `[d/d beta_1, ..., d/d beta_m, d/d intercept]`.
pub fn smooth_part_gradient(x: ArrayView2<'_, f64>, y: &[u8], model: &LogisticModel) -> Vec<f64> {
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let mut z = vec![0.0; x.nrows()];
    matvec(x, &model.coefficients, model.intercept, &mut z);
    let mut g = vec![0.0; x.ncols()];
    let gb = smooth_gradient(x, &z, &yf, &mut g);
    g.push(gb);
    g
}

/// Smooth part `(1/n) sum log-loss` at `model`.
pub fn smooth_part_value(x: ArrayView2<'_, f64>, y: &[u8], model: &LogisticModel) -> f64 {
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let mut z = vec![0.0; x.nrows()];
    matvec(x, &model.coefficients, model.intercept, &mut z);
    smooth_loss(&z, &yf)
}

/// Per-coefficient penalty weight `1 / (n C)`.
pub fn penalty_strength(n: usize, reg_c: f64) -> f64 {
    1.0 / (n as f64 * reg_c)
}

pub fn objective(x: ArrayView2<'_, f64>, y: &[u8], model: &LogisticModel) -> f64 {
    let lam = penalty_strength(x.nrows(), model.reg_c);
    smooth_part_value(x, y, model) + lam * model.coefficients.iter().map(|c| c.abs()).sum::<f64>()
}

fn validate(x: ArrayView2<'_, f64>, y: &[u8], reg_c: f64) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::dim(format!("{} rows for {} labels", x.nrows(), y.len())));
    }
    if x.nrows() == 0 {
        return Err(Error::arg("no rows"));
    }
    if !(reg_c > 0.0 && reg_c.is_finite()) {
        return Err(Error::arg(format!("C must be positive and finite, got {reg_c}")));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::arg("labels must be 0 or 1"));
    }
    let ones = y.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == y.len() {
        return Err(Error::arg("both classes must be present"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invariant("non-finite feature value"));
    }
    Ok(())
}

pub fn fit_l1_logistic(
    x: ArrayView2<'_, f64>,
    y: &[u8],
    reg_c: f64,
    config: &SolverConfig,
) -> Result<LogisticModel> {
    Ok(fit_l1_logistic_from(x, y, reg_c, config, None)?.model)
}

/// Solver entry point with an optional warm start.
pub fn fit_l1_logistic_from(
    x: ArrayView2<'_, f64>,
    y: &[u8],
    reg_c: f64,
    config: &SolverConfig,
    init: Option<&LogisticModel>,
) -> Result<LogisticFit> {
    validate(x, y, reg_c)?;
    let (n, m) = x.dim();
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let lam = penalty_strength(n, reg_c);

    let (mut beta, mut b) = match init {
        Some(mdl) if mdl.coefficients.len() == m => (mdl.coefficients.clone(), mdl.intercept),
        Some(mdl) => {
            return Err(Error::dim(format!(
                "warm start has {} coefficients for {m} features",
                mdl.coefficients.len()
            )))
        }
        None => {
            let p = yf.iter().sum::<f64>() / n as f64;
            (vec![0.0; m], (p / (1.0 - p)).ln())
        }
    };
    let l1 = |v: &[f64]| v.iter().map(|c| c.abs()).sum::<f64>();

    let mut zx = vec![0.0; n];
    matvec(x, &beta, b, &mut zx);
    let mut fx = smooth_loss(&zx, &yf) + lam * l1(&beta);
    let mut history = vec![fx];

    // Extrapolated point and its scores.
    let mut ybeta = beta.clone();
    let mut yb = b;
    let mut zy = zx.clone();
    let mut t = 1.0f64;
    let mut lip = 1e-2f64;

    let mut grad = vec![0.0; m];
    let mut cand = vec![0.0; m];
    let mut zc = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;

    // One backtracking proximal step from (pb, pbint) with scores zp. Returns the
    // candidate objective; candidate stored in cand/cb/zc.
    let prox_step = |pbeta: &[f64],
                     pb: f64,
                     zp: &[f64],
                     lip: &mut f64,
                     grad: &mut [f64],
                     cand: &mut [f64],
                     zc: &mut [f64]|
     -> (f64, f64) {
        let fp = smooth_loss(zp, &yf);
        let gb = smooth_gradient(x, zp, &yf, grad);
        loop {
            let step = 1.0 / *lip;
            let thr = lam * step;
            for j in 0..m {
                let u = pbeta[j] - step * grad[j];
                cand[j] = if u > thr {
                    u - thr
                } else if u < -thr {
                    u + thr
                } else {
                    0.0
                };
            }
            let cb = pb - step * gb;
            matvec(x, cand, cb, zc);
            let fc = smooth_loss(zc, &yf);
            let mut lin = gb * (cb - pb);
            let mut sq = (cb - pb) * (cb - pb);
            for j in 0..m {
                let dlt = cand[j] - pbeta[j];
                lin += grad[j] * dlt;
                sq += dlt * dlt;
            }
            if fc <= fp + lin + 0.5 * *lip * sq + 1e-12 * fp.abs() || *lip > 1e12 {
                return (cb, fc);
            }
            *lip *= 2.0;
        }
    };

    while iterations < config.max_iter {
        iterations += 1;
        let (cb, fc_smooth) = prox_step(&ybeta, yb, &zy, &mut lip, &mut grad, &mut cand, &mut zc);
        let mut fnew = fc_smooth + lam * l1(&cand);
        if fnew > fx {
            // Momentum overshot: plain proximal step from the current iterate.
            t = 1.0;
            let (cb2, fc2) = prox_step(&beta, b, &zx, &mut lip, &mut grad, &mut cand, &mut zc);
            fnew = fc2 + lam * l1(&cand);
            if fnew > fx {
                // Only rounding can get here; treat as converged at x.
                converged = true;
                break;
            }
            finish_step(&mut beta, &mut b, &mut zx, &cand, cb2, &zc, &mut ybeta, &mut yb, &mut zy, 0.0);
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let mom = (t - 1.0) / t_next;
            t = t_next;
            finish_step(&mut beta, &mut b, &mut zx, &cand, cb, &zc, &mut ybeta, &mut yb, &mut zy, mom);
        }
        let change = (fx - fnew).abs() / fx.abs().max(1e-300);
        fx = fnew;
        history.push(fx);
        if change < config.rel_tol {
            converged = true;
            break;
        }
    }

    Ok(LogisticFit {
        model: LogisticModel { coefficients: beta, intercept: b, reg_c },
        objective_history: history,
        iterations,
        converged,
    })
}

/// Moves the iterate to the candidate and forms the next extrapolated point
/// `x_new + mom (x_new - x_old)`; scores are combined linearly.
#[allow(clippy::too_many_arguments)]
fn finish_step(
    beta: &mut [f64],
    b: &mut f64,
    zx: &mut [f64],
    cand: &[f64],
    cb: f64,
    zc: &[f64],
    ybeta: &mut [f64],
    yb: &mut f64,
    zy: &mut [f64],
    mom: f64,
) {
    for j in 0..beta.len() {
        ybeta[j] = cand[j] + mom * (cand[j] - beta[j]);
        beta[j] = cand[j];
    }
    *yb = cb + mom * (cb - *b);
    *b = cb;
    for i in 0..zx.len() {
        zy[i] = zc[i] + mom * (zc[i] - zx[i]);
        zx[i] = zc[i];
    }
}

/// `sigmoid(intercept + X beta)` for every row.
pub fn predict_proba(model: &LogisticModel, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    if x.ncols() != model.coefficients.len() {
        return Err(Error::dim(format!(
            "model has {} coefficients, input has {} columns",
            model.coefficients.len(),
            x.ncols()
        )));
    }
    let mut z = vec![0.0; x.nrows()];
    matvec(x, &model.coefficients, model.intercept, &mut z);
    Ok(z.into_iter().map(sigmoid).collect())
}

/// Mean binary cross-entropy; probabilities are clipped to `[1e-15, 1 - 1e-15]`.
pub fn log_loss(prob: &[f64], y: &[u8]) -> f64 {
    let eps = 1e-15;
    prob.iter()
        .zip(y)
        .map(|(&p, &t)| {
            let p = p.clamp(eps, 1.0 - eps);
            if t == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / prob.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningConfig {
    pub c_min: f64,
    pub c_max: f64,
    pub grid_size: usize,
    pub solver: SolverConfig,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig { c_min: 1e-4, c_max: 5.0, grid_size: 10, solver: SolverConfig::default() }
    }
}

impl TuningConfig {
    /// Log-spaced grid from `c_min` to `c_max`, inclusive, ascending.
    pub fn grid(&self) -> Vec<f64> {
        let k = self.grid_size;
        if k == 1 {
            return vec![self.c_max];
        }
        let (lo, hi) = (self.c_min.ln(), self.c_max.ln());
        (0..k).map(|i| (lo + (hi - lo) * i as f64 / (k - 1) as f64).exp()).collect()
    }
}

/// Winner of the holdout search plus its bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TunedLogistic {
    pub model: LogisticModel,
    pub chosen_c: f64,
    pub holdout_log_loss: f64,
    /// `(C, holdout log loss)` for every grid point.
    pub grid_losses: Vec<(f64, f64)>,
}

const SPLIT_ATTEMPTS: usize = 100;

/// Picks `C` by holdout log loss on an even random split, then refits on all
/// rows. Grid points are fitted from strongest to weakest penalty, each warm
/// started from the previous solution. Ties go to the smaller `C`.
pub fn tune_l1_logistic<R: Rng + ?Sized>(
    x: ArrayView2<'_, f64>,
    y: &[u8],
    config: &TuningConfig,
    rng: &mut R,
) -> Result<TunedLogistic> {
    let n = x.nrows();
    if n < 10 {
        return Err(Error::arg(format!("tuning needs at least 10 rows, got {n}")));
    }
    validate(x, y, 1.0)?;
    if !(config.c_min > 0.0 && config.c_max >= config.c_min && config.grid_size >= 1) {
        return Err(Error::arg("invalid C grid"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let half = n / 2;
    let mut found = false;
    for _ in 0..SPLIT_ATTEMPTS {
        idx.shuffle(rng);
        let ones = idx[..half].iter().filter(|&&i| y[i] == 1).count();
        if ones > 0 && ones < half {
            found = true;
            break;
        }
    }
    if !found {
        return Err(Error::arg("could not draw a training half containing both classes"));
    }
    let (tr, ho) = idx.split_at(half);
    let xtr = x.select(ndarray::Axis(0), tr);
    let ytr: Vec<u8> = tr.iter().map(|&i| y[i]).collect();
    let xho = x.select(ndarray::Axis(0), ho);
    let yho: Vec<u8> = ho.iter().map(|&i| y[i]).collect();

    let grid = config.grid();
    let mut losses = Vec::with_capacity(grid.len());
    let mut warm: Option<LogisticModel> = None;
    for &c in &grid {
        let fit = fit_l1_logistic_from(xtr.view(), &ytr, c, &config.solver, warm.as_ref())?;
        let p = predict_proba(&fit.model, xho.view())?;
        losses.push((c, log_loss(&p, &yho)));
        warm = Some(fit.model);
    }
    let (best_c, best_loss) = losses
        .iter()
        .copied()
        .fold((f64::NAN, f64::INFINITY), |acc, (c, l)| if l < acc.1 { (c, l) } else { acc });
    let model = fit_l1_logistic(x, y, best_c, &config.solver)?;
    Ok(TunedLogistic { model, chosen_c: best_c, holdout_log_loss: best_loss, grid_losses: losses })
}
