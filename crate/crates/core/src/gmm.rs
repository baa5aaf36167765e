//! Full-covariance Gaussian mixtures: EM fitting, densities, closed-form
//! marginals and holdout selection of the component count.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_in_place, forward_solve_sq_norm, log_det_from_cholesky, log_sum_exp};
use crate::rng::{derive_seed, fork_seed, seeded};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Serialize)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    /// Row-major `q x q` matrices.
    covariances: Vec<Vec<f64>>,
    #[serde(skip)]
    factors: Vec<ComponentFactor>,
}

#[derive(Debug, Clone)]
struct ComponentFactor {
    chol: Vec<f64>,
    /// `log w_j - (q log 2pi + log det S_j) / 2`
    log_norm: f64,
}

#[derive(Deserialize)]
struct RawMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<Vec<f64>>,
}

impl<'de> Deserialize<'de> for GaussianMixture {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = RawMixture::deserialize(de)?;
        GaussianMixture::new(raw.weights, raw.means, raw.covariances).map_err(serde::de::Error::custom)
    }
}

impl PartialEq for GaussianMixture {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights && self.means == other.means && self.covariances == other.covariances
    }
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, covariances: Vec<Vec<f64>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || covariances.len() != k {
            return Err(Error::dim(format!(
                "{k} weights, {} means, {} covariances",
                means.len(),
                covariances.len()
            )));
        }
        let q = means[0].len();
        if q == 0 || means.iter().any(|m| m.len() != q) || covariances.iter().any(|c| c.len() != q * q) {
            return Err(Error::dim("inconsistent component dimensions"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invariant("mixture weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::invariant(format!("mixture weights sum to {total}")));
        }
        let mut factors = Vec::with_capacity(k);
        for j in 0..k {
            let mut chol = covariances[j].clone();
            if !cholesky_in_place(&mut chol, q) {
                return Err(Error::invariant(format!("covariance {j} is not positive definite")));
            }
            let log_norm = weights[j].ln() - 0.5 * (q as f64 * LN_2PI + log_det_from_cholesky(&chol, q));
            factors.push(ComponentFactor { chol, log_norm });
        }
        Ok(GaussianMixture { weights, means, covariances, factors })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[Vec<f64>] {
        &self.covariances
    }

    /// `log sum_j w_j N(x; mu_j, S_j)`, with a caller-provided scratch buffer of
    /// length at least `q + k`.
    fn log_density_with(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        let q = self.dim();
        let k = self.n_components();
        let (diff, rest) = scratch.split_at_mut(q);
        let (terms, solve) = rest.split_at_mut(k);
        for j in 0..k {
            for ((d, xi), mi) in diff.iter_mut().zip(x).zip(&self.means[j]) {
                *d = xi - mi;
            }
            let m = forward_solve_sq_norm(&self.factors[j].chol, q, diff, solve);
            terms[j] = self.factors[j].log_norm - 0.5 * m;
        }
        log_sum_exp(terms)
    }

    fn scratch(&self) -> Vec<f64> {
        vec![0.0; 2 * self.dim() + self.n_components()]
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::dim(format!("point of length {} for dimension {}", x.len(), self.dim())));
        }
        Ok(self.log_density_with(x, &mut self.scratch()))
    }

    /// Log density of every row.
    pub fn log_density_rows(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::dim(format!("{} columns for dimension {}", x.ncols(), self.dim())));
        }
        let mut scratch = self.scratch();
        let mut buf = vec![0.0; self.dim()];
        Ok(x.outer_iter()
            .map(|row| {
                buf.iter_mut().zip(row.iter()).for_each(|(b, v)| *b = *v);
                self.log_density_with(&buf, &mut scratch)
            })
            .collect())
    }

    pub fn mean_log_likelihood(&self, x: ArrayView2<'_, f64>) -> Result<f64> {
        let v = self.log_density_rows(x)?;
        Ok(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Mixture over the coordinates `coords` (in that order). Weights are kept.
pub fn marginalize(g: &GaussianMixture, coords: &[usize]) -> Result<GaussianMixture> {
    let q = g.dim();
    if coords.is_empty() {
        return Err(Error::arg("empty coordinate set"));
    }
    if let Some(&c) = coords.iter().find(|&&c| c >= q) {
        return Err(Error::arg(format!("coordinate {c} out of range for dimension {q}")));
    }
    let mut seen = vec![false; q];
    for &c in coords {
        if std::mem::replace(&mut seen[c], true) {
            return Err(Error::arg(format!("coordinate {c} repeated")));
        }
    }
    let p = coords.len();
    let means = g.means.iter().map(|m| coords.iter().map(|&c| m[c]).collect()).collect();
    let covs = g
        .covariances
        .iter()
        .map(|s| {
            let mut out = vec![0.0; p * p];
            for (a, &ca) in coords.iter().enumerate() {
                for (b, &cb) in coords.iter().enumerate() {
                    out[a * p + b] = s[ca * q + cb];
                }
            }
            out
        })
        .collect();
    GaussianMixture::new(g.weights.clone(), means, covs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GmmInit {
    /// Farthest-point seeding refined by a few Lloyd steps.
    FarthestPoint,
    /// Means at `k` distinct random rows, shared data covariance, equal weights.
    RandomRows,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub max_iter: usize,
    /// Stop when the mean log-likelihood gain is below `rel_tol * max(|ll|, 1)`.
    pub rel_tol: f64,
    /// Added to the diagonal of every covariance estimate.
    pub ridge: f64,
    pub restarts: usize,
    pub init: GmmInit,
    pub lloyd_iters: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            max_iter: 200,
            rel_tol: 1e-5,
            ridge: 1e-6,
            restarts: 3,
            init: GmmInit::FarthestPoint,
            lloyd_iters: 10,
        }
    }
}

/// Result of [`fit_gmm_traced`].
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub mixture: GaussianMixture,
    pub mean_log_likelihood: f64,
    /// Mean training log-likelihood per EM iteration, one trace per restart.
    pub traces: Vec<Vec<f64>>,
    pub best_restart: usize,
}

pub fn fit_gmm<R: Rng + ?Sized>(
    x: ArrayView2<'_, f64>,
    k: usize,
    rng: &mut R,
    config: &GmmConfig,
) -> Result<GaussianMixture> {
    Ok(fit_gmm_traced(x, k, rng, config)?.mixture)
}

pub fn fit_gmm_traced<R: Rng + ?Sized>(
    x: ArrayView2<'_, f64>,
    k: usize,
    rng: &mut R,
    config: &GmmConfig,
) -> Result<GmmFit> {
    let (n, q) = x.dim();
    if k == 0 {
        return Err(Error::arg("need at least one component"));
    }
    if q == 0 {
        return Err(Error::arg("data has no columns"));
    }
    if n < k {
        return Err(Error::arg(format!("{n} rows cannot support {k} components")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invariant("non-finite value in mixture data"));
    }
    let flat: Vec<f64> = x.iter().copied().collect();
    let data = Flat { x: &flat, n, q };
    let restarts = config.restarts.max(1);
    let mut best: Option<(f64, Params, usize)> = None;
    let mut traces = Vec::with_capacity(restarts);
    for r in 0..restarts {
        let init = initialize(&data, k, rng, config);
        let (params, trace) = run_em(&data, init, config);
        let ll = *trace.last().expect("EM records at least one iteration");
        if best.as_ref().map_or(true, |(b, _, _)| ll > *b) {
            best = Some((ll, params, r));
        }
        traces.push(trace);
    }
    let (ll, params, best_restart) = best.expect("at least one restart");
    let mixture = params.into_mixture(q)?;
    Ok(GmmFit { mixture, mean_log_likelihood: ll, traces, best_restart })
}

struct Flat<'a> {
    x: &'a [f64],
    n: usize,
    q: usize,
}

impl Flat<'_> {
    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.q..(i + 1) * self.q]
    }
}

#[derive(Clone)]
struct Params {
    weights: Vec<f64>,
    means: Vec<f64>,
    covs: Vec<f64>,
}

impl Params {
    fn into_mixture(self, q: usize) -> Result<GaussianMixture> {
        let k = self.weights.len();
        let total: f64 = self.weights.iter().sum();
        let weights = self.weights.iter().map(|w| w / total).collect();
        let means = (0..k).map(|j| self.means[j * q..(j + 1) * q].to_vec()).collect();
        let covs = (0..k).map(|j| self.covs[j * q * q..(j + 1) * q * q].to_vec()).collect();
        GaussianMixture::new(weights, means, covs)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Data covariance (MLE) plus ridge, row-major.
fn global_covariance(data: &Flat<'_>, ridge: f64) -> Vec<f64> {
    let (n, q) = (data.n, data.q);
    let mut mean = vec![0.0; q];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(data.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; q * q];
    for i in 0..n {
        let r = data.row(i);
        for a in 0..q {
            let da = r[a] - mean[a];
            for b in 0..=a {
                cov[a * q + b] += da * (r[b] - mean[b]);
            }
        }
    }
    symmetrize_scale(&mut cov, q, 1.0 / n as f64, ridge);
    cov
}

/// Scales the lower triangle, mirrors it and adds `ridge` on the diagonal.
fn symmetrize_scale(cov: &mut [f64], q: usize, scale: f64, ridge: f64) {
    for a in 0..q {
        for b in 0..=a {
            let v = cov[a * q + b] * scale;
            cov[a * q + b] = v;
            cov[b * q + a] = v;
        }
        cov[a * q + a] += ridge;
    }
}

fn initialize<R: Rng + ?Sized>(data: &Flat<'_>, k: usize, rng: &mut R, config: &GmmConfig) -> Params {
    let (n, q) = (data.n, data.q);
    let global = global_covariance(data, config.ridge);
    match config.init {
        GmmInit::RandomRows => {
            let rows = rand::seq::index::sample(rng, n, k).into_vec();
            let means = rows.iter().flat_map(|&i| data.row(i).to_vec()).collect();
            let covs = (0..k).flat_map(|_| global.clone()).collect();
            Params { weights: vec![1.0 / k as f64; k], means, covs }
        }
        GmmInit::FarthestPoint => {
            let first = rng.gen_range(0..n);
            let mut centers: Vec<f64> = data.row(first).to_vec();
            let mut min_d: Vec<f64> = (0..n).map(|i| sq_dist(data.row(i), data.row(first))).collect();
            for _ in 1..k {
                let (far, _) = min_d
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
                let c = data.row(far).to_vec();
                for (i, md) in min_d.iter_mut().enumerate() {
                    *md = md.min(sq_dist(data.row(i), &c));
                }
                centers.extend(c);
            }
            let mut assign = vec![0usize; n];
            for it in 0..=config.lloyd_iters {
                let mut changed = false;
                for (i, a) in assign.iter_mut().enumerate() {
                    let r = data.row(i);
                    let mut best = (0, f64::INFINITY);
                    for j in 0..k {
                        let d = sq_dist(r, &centers[j * q..(j + 1) * q]);
                        if d < best.1 {
                            best = (j, d);
                        }
                    }
                    if *a != best.0 {
                        changed = true;
                    }
                    *a = best.0;
                }
                if it == config.lloyd_iters || (it > 0 && !changed) {
                    break;
                }
                let mut sums = vec![0.0; k * q];
                let mut counts = vec![0usize; k];
                for (i, &a) in assign.iter().enumerate() {
                    counts[a] += 1;
                    for (s, v) in sums[a * q..(a + 1) * q].iter_mut().zip(data.row(i)) {
                        *s += v;
                    }
                }
                for j in 0..k {
                    if counts[j] > 0 {
                        for t in 0..q {
                            centers[j * q + t] = sums[j * q + t] / counts[j] as f64;
                        }
                    }
                }
            }
            // Pooled within-cluster covariance keeps every initial component broad.
            let mut counts = vec![0usize; k];
            let mut pooled = vec![0.0; q * q];
            for (i, &a) in assign.iter().enumerate() {
                counts[a] += 1;
                let r = data.row(i);
                let c = &centers[a * q..(a + 1) * q];
                for s in 0..q {
                    let ds = r[s] - c[s];
                    for t in 0..=s {
                        pooled[s * q + t] += ds * (r[t] - c[t]);
                    }
                }
            }
            symmetrize_scale(&mut pooled, q, 1.0 / n as f64, config.ridge);
            let mut trial = pooled.clone();
            let base = if cholesky_in_place(&mut trial, q) { pooled } else { global };
            let weights: Vec<f64> = counts.iter().map(|&c| c.max(1) as f64 / n as f64).collect();
            Params { weights, means: centers, covs: (0..k).flat_map(|_| base.clone()).collect() }
        }
    }
}

/// EM iterations. The trace holds the mean log-likelihood of the parameters
/// entering each E-step; the returned parameters match the last entry.
fn run_em(data: &Flat<'_>, mut p: Params, config: &GmmConfig) -> (Params, Vec<f64>) {
    let (n, q) = (data.n, data.q);
    let k = p.weights.len();
    let mut resp = vec![0.0; n * k];
    let mut trace = Vec::new();
    let mut chol = vec![0.0; k * q * q];
    let mut log_norm = vec![0.0; k];
    let mut inv_diag = vec![0.0; k * q];
    let mut solve = vec![0.0; q];
    let mut prev = f64::NEG_INFINITY;

    for it in 0..=config.max_iter {
        // Factor; a failed factorization (only possible through rounding) falls
        // back to a diagonal-only covariance.
        for j in 0..k {
            let c = &mut chol[j * q * q..(j + 1) * q * q];
            c.copy_from_slice(&p.covs[j * q * q..(j + 1) * q * q]);
            if !cholesky_in_place(c, q) {
                let s = &mut p.covs[j * q * q..(j + 1) * q * q];
                for a in 0..q {
                    for b in 0..q {
                        if a != b {
                            s[a * q + b] = 0.0;
                        }
                    }
                    s[a * q + a] = s[a * q + a].abs().max(config.ridge);
                }
                c.copy_from_slice(s);
                let ok = cholesky_in_place(c, q);
                debug_assert!(ok);
            }
            log_norm[j] = p.weights[j].ln() - 0.5 * (q as f64 * LN_2PI + log_det_from_cholesky(c, q));
        }
        // E-step, component-major so each factor stays in cache.
        for j in 0..k {
            let l = &chol[j * q * q..(j + 1) * q * q];
            for (t, v) in inv_diag[j * q..(j + 1) * q].iter_mut().enumerate() {
                *v = 1.0 / l[t * q + t];
            }
            let inv = &inv_diag[j * q..(j + 1) * q];
            let mu = &p.means[j * q..(j + 1) * q];
            for i in 0..n {
                let x = data.row(i);
                let mut m = 0.0;
                for a in 0..q {
                    let mut s = x[a] - mu[a];
                    let row = &l[a * q..a * q + a];
                    for (lk, zk) in row.iter().zip(&solve[..a]) {
                        s -= lk * zk;
                    }
                    let z = s * inv[a];
                    solve[a] = z;
                    m += z * z;
                }
                resp[i * k + j] = log_norm[j] - 0.5 * m;
            }
        }
        let mut total = 0.0;
        for r in resp.chunks_exact_mut(k) {
            let mx = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in r.iter_mut() {
                *v = (*v - mx).exp();
                s += *v;
            }
            let inv_s = 1.0 / s;
            for v in r.iter_mut() {
                *v *= inv_s;
            }
            total += mx + s.ln();
        }
        let ll = total / n as f64;
        trace.push(ll);
        if it == config.max_iter || (it > 0 && ll - prev < config.rel_tol * prev.abs().max(1.0)) {
            break;
        }
        prev = ll;

        // M-step.
        let mut nk = vec![10.0 * f64::EPSILON; k];
        p.means.iter_mut().for_each(|m| *m = 0.0);
        for i in 0..n {
            let x = data.row(i);
            for (j, &w) in resp[i * k..(i + 1) * k].iter().enumerate() {
                nk[j] += w;
                for (m, v) in p.means[j * q..(j + 1) * q].iter_mut().zip(x) {
                    *m += w * v;
                }
            }
        }
        for j in 0..k {
            p.means[j * q..(j + 1) * q].iter_mut().for_each(|m| *m /= nk[j]);
        }
        p.covs.iter_mut().for_each(|v| *v = 0.0);
        let mut diff = vec![0.0; q];
        for i in 0..n {
            let x = data.row(i);
            for (j, &w) in resp[i * k..(i + 1) * k].iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let mu = &p.means[j * q..(j + 1) * q];
                for t in 0..q {
                    diff[t] = x[t] - mu[t];
                }
                let s = &mut p.covs[j * q * q..(j + 1) * q * q];
                for a in 0..q {
                    let da = w * diff[a];
                    for (c, d) in s[a * q..a * q + a + 1].iter_mut().zip(&diff[..=a]) {
                        *c += da * d;
                    }
                }
            }
        }
        for j in 0..k {
            symmetrize_scale(&mut p.covs[j * q * q..(j + 1) * q * q], q, 1.0 / nk[j], config.ridge);
            p.weights[j] = nk[j] / n as f64;
        }
        let total_w: f64 = p.weights.iter().sum();
        p.weights.iter_mut().for_each(|w| *w /= total_w);
    }
    (p, trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectConfig {
    pub k_max: usize,
    /// Stop the scan once this many consecutive `k` fail to beat the best
    /// holdout score. `None` scans all of `1..=k_max`.
    pub patience: Option<usize>,
    pub gmm: GmmConfig,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig { k_max: 15, patience: Some(3), gmm: GmmConfig::default() }
    }
}

/// Minimum rows for holdout component selection.
pub const MIN_SELECTION_ROWS: usize = 30;

#[derive(Debug, Clone)]
pub struct SelectedMixture {
    pub mixture: GaussianMixture,
    pub k: usize,
    /// Holdout mean log-likelihood for each fitted `k = 1, 2, ...`.
    pub holdout_scores: Vec<f64>,
}

/// Fits `k = 1..=k_max` on a random half, scores mean log-likelihood on the
/// other half, and refits the winner on all rows. Ties go to the smaller `k`.
pub fn select_components<R: Rng + ?Sized>(
    x: ArrayView2<'_, f64>,
    rng: &mut R,
    config: &SelectConfig,
) -> Result<SelectedMixture> {
    let n = x.nrows();
    if n < MIN_SELECTION_ROWS {
        return Err(Error::arg(format!(
            "component selection needs at least {MIN_SELECTION_ROWS} rows, got {n}"
        )));
    }
    let master = fork_seed(rng);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded(derive_seed(master, &[0])));
    let (tr, ho) = idx.split_at(n / 2);
    let xtr = x.select(Axis(0), tr);
    let xho = x.select(Axis(0), ho);
    let k_max = config.k_max.max(1).min(tr.len());
    let mut scores = Vec::with_capacity(k_max);
    let mut best_k = 1;
    for k in 1..=k_max {
        let mut r = seeded(derive_seed(master, &[1, k as u64]));
        let g = fit_gmm(xtr.view(), k, &mut r, &config.gmm)?;
        let s = g.mean_log_likelihood(xho.view())?;
        if k == 1 || s > scores[best_k - 1] {
            best_k = k;
        }
        scores.push(s);
        if config.patience.is_some_and(|p| k - best_k >= p.max(1)) {
            break;
        }
    }
    let mut r = seeded(derive_seed(master, &[2, best_k as u64]));
    let mixture = fit_gmm(x, best_k, &mut r, &config.gmm)?;
    Ok(SelectedMixture { mixture, k: best_k, holdout_scores: scores })
}

/// Row-major copy of a mixture's covariance as a matrix, for inspection.
pub fn covariance_matrix(g: &GaussianMixture, j: usize) -> Array2<f64> {
    let q = g.dim();
    Array2::from_shape_vec((q, q), g.covariances[j].clone()).expect("q x q")
}
