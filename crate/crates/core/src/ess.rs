//! Effective sample size, order-2 Rényi divergence and the importance-weighted
//! generalization bound.
//!
//! All logarithms are natural. For true density-ratio weights the empirical
//! ESS converges to `exp(-D2(P || Q))`.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::ProjectionSpec;
use crate::error::{Error, Result};

/// Nonnegative, finite importance weights with at least one positive entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invariant("weight vector is empty"));
        }
        if let Some(i) = values.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invariant(format!("weight {i} is {} (must be finite and >= 0)", values[i])));
        }
        if values.iter().all(|&w| w == 0.0) {
            return Err(Error::invariant("all weights are zero"));
        }
        Ok(WeightVector(values))
    }

    /// All-ones weights of length `n`.
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform weights need n >= 1");
        WeightVector(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        WeightVector::new(self.0.iter().map(|w| w * c).collect())
    }

    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        WeightVector::new(rows.iter().map(|&i| self.0[i]).collect())
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        WeightVector::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

/// `(sum w)^2 / (n sum w^2)`, a value in `(0, 1]`.
///
/// Weights are divided by their maximum first, which makes the result
/// independent of the overall scale and keeps the squares away from overflow.
pub fn empirical_ess(w: &WeightVector) -> f64 {
    let v = w.as_slice();
    let max = v.iter().copied().fold(0.0, f64::max);
    let (s1, s2) = v.iter().fold((0.0, 0.0), |(a, b), &x| {
        let r = x / max;
        (a + r, b + r * r)
    });
    (s1 * s1 / (v.len() as f64 * s2)).min(1.0)
}

pub fn normalize_weights(w: &WeightVector) -> WeightVector {
    let total: f64 = w.as_slice().iter().sum();
    WeightVector(w.as_slice().iter().map(|x| x / total).collect())
}

/// Weighted mean `sum wbar_i v_i` with `wbar` normalized to sum to one.
pub fn self_normalized_estimate(values: &[f64], w: &WeightVector) -> Result<f64> {
    if values.len() != w.len() {
        return Err(Error::dim(format!("{} values for {} weights", values.len(), w.len())));
    }
    let total: f64 = w.as_slice().iter().sum();
    Ok(values.iter().zip(w.as_slice()).map(|(v, x)| v * x).sum::<f64>() / total)
}

/// Target `N(mu_p, S)` and source `N(mu_q, S)` with a shared SPD covariance.
#[derive(Debug, Clone)]
pub struct GaussianPairSpec {
    mu_p: DVector<f64>,
    mu_q: DVector<f64>,
    covariance: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl GaussianPairSpec {
    pub fn new(mu_p: Vec<f64>, mu_q: Vec<f64>, covariance: Array2<f64>) -> Result<Self> {
        let d = mu_p.len();
        if d == 0 || mu_q.len() != d || covariance.dim() != (d, d) {
            return Err(Error::dim(format!(
                "means of length {d} and {} with covariance {:?}",
                mu_q.len(),
                covariance.dim()
            )));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| covariance[[i, j]]);
        if (&cov - cov.transpose()).abs().max() > 1e-12 * cov.abs().max().max(1.0) {
            return Err(Error::invariant("covariance is not symmetric"));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::invariant("covariance is not positive definite"))?;
        Ok(GaussianPairSpec {
            mu_p: DVector::from_vec(mu_p),
            mu_q: DVector::from_vec(mu_q),
            covariance: cov,
            chol,
        })
    }

    /// Source `N(0, I_d)` against target `N(lambda 1, I_d)`.
    pub fn isotropic_shift(d: usize, lambda: f64) -> Result<Self> {
        GaussianPairSpec::new(vec![lambda; d], vec![0.0; d], Array2::eye(d))
    }

    pub fn dim(&self) -> usize {
        self.mu_p.len()
    }

    /// Pair induced by the map `x -> A (x - b)`; Gaussians stay Gaussian.
    pub fn project(&self, spec: &ProjectionSpec) -> Result<Self> {
        let a = spec.matrix();
        if a.ncols() != self.dim() {
            return Err(Error::dim(format!("projection width {} for dimension {}", a.ncols(), self.dim())));
        }
        let am = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]]);
        let b = DVector::from_iterator(a.ncols(), spec.offset().iter().copied());
        let mp = &am * (&self.mu_p - &b);
        let mq = &am * (&self.mu_q - &b);
        let cov = &am * &self.covariance * am.transpose();
        let cov = (&cov + cov.transpose()) * 0.5;
        let k = cov.nrows();
        GaussianPairSpec::new(
            mp.iter().copied().collect(),
            mq.iter().copied().collect(),
            Array2::from_shape_fn((k, k), |(i, j)| cov[(i, j)]),
        )
    }

    fn log_normal(&self, mu: &DVector<f64>, x: &[f64]) -> f64 {
        let d = self.dim();
        let diff = DVector::from_column_slice(x) - mu;
        let z = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        let logdet = 2.0 * self.chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + z.norm_squared())
    }

    pub fn log_target_density(&self, x: &[f64]) -> f64 {
        self.log_normal(&self.mu_p, x)
    }

    pub fn log_source_density(&self, x: &[f64]) -> f64 {
        self.log_normal(&self.mu_q, x)
    }

    /// `log p(x) - log q(x)`, which is affine in `x` for a shared covariance.
    pub fn log_ratio(&self, x: &[f64]) -> f64 {
        let delta = &self.mu_p - &self.mu_q;
        let sinv_delta = self.chol.solve(&delta);
        let mid = (&self.mu_p + &self.mu_q) * 0.5;
        let xv = DVector::from_column_slice(x);
        sinv_delta.dot(&(xv - mid))
    }

    /// True density-ratio weights `p/q` for every row of `x`.
    pub fn true_weights(&self, x: ArrayView2<'_, f64>) -> Result<WeightVector> {
        if x.ncols() != self.dim() {
            return Err(Error::dim(format!("{} columns for dimension {}", x.ncols(), self.dim())));
        }
        let delta = &self.mu_p - &self.mu_q;
        let coef = self.chol.solve(&delta);
        let mid = (&self.mu_p + &self.mu_q) * 0.5;
        let c0 = coef.dot(&mid);
        let w: Vec<f64> = x
            .outer_iter()
            .map(|row| (row.iter().zip(coef.iter()).map(|(a, b)| a * b).sum::<f64>() - c0).exp())
            .collect();
        WeightVector::new(w)
    }
}

/// Closed-form `D2 = (mu_p - mu_q)^T S^{-1} (mu_p - mu_q)`.
pub fn gaussian_d2(spec: &GaussianPairSpec) -> f64 {
    let delta = &spec.mu_p - &spec.mu_q;
    let z = spec
        .chol
        .l_dirty()
        .solve_lower_triangular(&delta)
        .expect("Cholesky factor has a positive diagonal");
    z.norm_squared()
}

/// `ESS* = exp(-D2)`.
pub fn population_ess(d2: f64) -> Result<f64> {
    if !d2.is_finite() || d2 < 0.0 {
        return Err(Error::arg(format!("D2 must be finite and >= 0, got {d2}")));
    }
    Ok((-d2).exp())
}

/// Monte Carlo `D2 = log E_P[p/q]` from samples of the target, evaluated with a
/// max shift so large log-ratios do not overflow.
pub fn mc_d2<P, Q>(log_p: P, log_q: Q, samples_from_target: ArrayView2<'_, f64>) -> Result<f64>
where
    P: Fn(&[f64]) -> f64,
    Q: Fn(&[f64]) -> f64,
{
    let m = samples_from_target.nrows();
    if m == 0 {
        return Err(Error::arg("no target samples"));
    }
    let mut buf = vec![0.0; samples_from_target.ncols()];
    let mut log_ratios = Vec::with_capacity(m);
    for (j, row) in samples_from_target.outer_iter().enumerate() {
        buf.iter_mut().zip(row.iter()).for_each(|(b, v)| *b = *v);
        let lp = log_p(&buf);
        let lq = log_q(&buf);
        if lq == f64::NEG_INFINITY || lq.is_nan() {
            return Err(Error::Numerical(format!(
                "sample {j} lies outside the support of the source density"
            )));
        }
        if !lp.is_finite() || !lq.is_finite() {
            return Err(Error::Numerical(format!("non-finite log density at sample {j}")));
        }
        log_ratios.push(lp - lq);
    }
    let shift = log_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = log_ratios.iter().map(|r| (r - shift).exp()).sum::<f64>() / m as f64;
    Ok(shift + mean.ln())
}

/// Inputs of the importance-weighted uniform deviation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub ess_star: f64,
    pub pdim: u64,
    pub n: u64,
    pub delta: f64,
}

/// `2^{5/4} / sqrt(ESS*) * [(p log(2 e n / p) + log(4 / delta)) / n]^{3/8}`.
pub fn generalization_bound(b: &BoundParams) -> Result<f64> {
    if !(b.ess_star > 0.0 && b.ess_star <= 1.0) {
        return Err(Error::arg(format!("ess_star must lie in (0, 1], got {}", b.ess_star)));
    }
    if b.pdim == 0 || b.n == 0 {
        return Err(Error::arg("pdim and n must be positive"));
    }
    if b.pdim > b.n {
        return Err(Error::arg(format!("pdim {} exceeds n {}", b.pdim, b.n)));
    }
    if !(b.delta > 0.0 && b.delta < 1.0) {
        return Err(Error::arg(format!("delta must lie in (0, 1), got {}", b.delta)));
    }
    let (p, n) = (b.pdim as f64, b.n as f64);
    let complexity = (p * (2.0 * std::f64::consts::E * n / p).ln() + (4.0 / b.delta).ln()) / n;
    Ok(2f64.powf(1.25) / b.ess_star.sqrt() * complexity.powf(0.375))
}

/// Draws `n` rows from `N(mu, S)` of a pair, using its Cholesky factor.
pub fn sample_gaussian<R: rand::Rng + ?Sized>(
    spec: &GaussianPairSpec,
    from_target: bool,
    n: usize,
    rng: &mut R,
) -> Array2<f64> {
    let d = spec.dim();
    let mu = if from_target { &spec.mu_p } else { &spec.mu_q };
    let l = spec.chol.l();
    let mut out = Array2::<f64>::zeros((n, d));
    let mut z = DVector::<f64>::zeros(d);
    for mut row in out.outer_iter_mut() {
        for v in z.iter_mut() {
            *v = rng.sample(rand_distr::StandardNormal);
        }
        let x = &l * &z + mu;
        row.iter_mut().zip(x.iter()).for_each(|(r, v)| *r = *v);
    }
    out
}

/// Convenience: `D2` and `ESS*` of an isotropic mean shift, `(d lambda^2, exp(-d lambda^2))`.
pub fn isotropic_shift_divergence(d: usize, lambda: f64) -> (f64, f64) {
    let d2 = d as f64 * lambda * lambda;
    (d2, (-d2).exp())
}

pub fn weights_from_log(log_w: &Array1<f64>) -> Result<WeightVector> {
    let m = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    WeightVector::new(log_w.iter().map(|v| (v - m).exp()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    use crate::rng::seeded;

    fn wv(v: &[f64]) -> WeightVector {
        WeightVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn ess_unit_cases() {
        for n in [1usize, 3, 17, 1000] {
            assert_eq!(empirical_ess(&WeightVector::new(vec![0.37; n]).unwrap()), 1.0);
        }
        assert_eq!(empirical_ess(&wv(&[1.0, 0.0, 0.0, 0.0])), 0.25);
    }

    #[test]
    fn weight_vector_rejects_bad_input() {
        assert!(WeightVector::new(vec![0.0, 0.0]).is_err());
        assert!(WeightVector::new(vec![1.0, -1.0]).is_err());
        assert!(WeightVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(WeightVector::new(vec![]).is_err());
        assert!(serde_json::from_str::<WeightVector>("[0.0]").is_err());
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_weights(&wv(&[2.0, 2.0])).as_slice(), &[0.5, 0.5]);
        assert_eq!(normalize_weights(&wv(&[1.0, 3.0])).as_slice(), &[0.25, 0.75]);
        let w = wv(&[0.125, 0.5, 0.375]);
        for (a, b) in normalize_weights(&w).as_slice().iter().zip(w.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn self_normalized_basic() {
        let v = [1.0, 2.0, 6.0];
        assert!((self_normalized_estimate(&v, &wv(&[1.0, 1.0, 1.0])).unwrap() - 3.0).abs() < 1e-15);
        assert_eq!(self_normalized_estimate(&v, &wv(&[0.0, 0.0, 5.0])).unwrap(), 6.0);
        assert!(self_normalized_estimate(&v, &wv(&[1.0])).is_err());
    }

    #[test]
    fn self_normalized_recovers_target_mean() {
        // Source N(0,1), target N(0.5,1): the weighted mean of x estimates 0.5.
        let spec = GaussianPairSpec::isotropic_shift(1, 0.5).unwrap();
        let mut rng = seeded(11);
        let x = sample_gaussian(&spec, false, 100_000, &mut rng);
        let w = spec.true_weights(x.view()).unwrap();
        let est = self_normalized_estimate(x.column(0).as_slice_memory_order().unwrap(), &w).unwrap();
        assert!((est - 0.5).abs() < 0.02, "estimate {est}");
    }

    #[test]
    fn gaussian_d2_cases() {
        let s = GaussianPairSpec::isotropic_shift(4, 1.0).unwrap();
        assert!((gaussian_d2(&s) - 4.0).abs() < 1e-14);
        let same = GaussianPairSpec::new(vec![1.0, 2.0], vec![1.0, 2.0], Array2::eye(2)).unwrap();
        assert_eq!(gaussian_d2(&same), 0.0);
        let aniso =
            GaussianPairSpec::new(vec![1.0, 0.0], vec![0.0, 0.0], array![[4.0, 0.0], [0.0, 1.0]])
                .unwrap();
        assert!((gaussian_d2(&aniso) - 0.25).abs() < 1e-14);
        assert!(GaussianPairSpec::new(vec![0.0; 2], vec![0.0; 2], array![[1.0, 2.0], [2.0, 1.0]]).is_err());
    }

    #[test]
    fn anisotropic_d2_agrees_with_monte_carlo() {
        // Oracle: log-mean-exp of the density ratio over 1e6 target draws.
        let spec =
            GaussianPairSpec::new(vec![1.0, 0.0], vec![0.0, 0.0], array![[4.0, 0.0], [0.0, 1.0]])
                .unwrap();
        let mut rng = seeded(5);
        let xs = sample_gaussian(&spec, true, 1_000_000, &mut rng);
        let mc = mc_d2(|x| spec.log_target_density(x), |x| spec.log_source_density(x), xs.view())
            .unwrap();
        assert!((mc - 0.25).abs() < 0.01, "mc {mc}");
    }

    #[test]
    fn population_ess_cases() {
        assert_eq!(population_ess(0.0).unwrap(), 1.0);
        assert!((population_ess(10.0 * 0.25).unwrap() - 0.082_085_0).abs() < 1e-7);
        assert!((population_ess(5.0 * 0.09).unwrap() - 0.637_628_2).abs() < 1e-7);
        assert!(population_ess(-0.1).is_err());
        assert!(population_ess(f64::NAN).is_err());
    }

    #[test]
    fn mc_d2_cases() {
        let spec = GaussianPairSpec::isotropic_shift(3, 0.4).unwrap();
        let mut rng = seeded(9);
        let xs = sample_gaussian(&spec, true, 1_000_000, &mut rng);
        let same = mc_d2(|x| spec.log_source_density(x), |x| spec.log_source_density(x), xs.view())
            .unwrap();
        assert_eq!(same, 0.0);
        let est = mc_d2(|x| spec.log_target_density(x), |x| spec.log_source_density(x), xs.view())
            .unwrap();
        assert!((est - 0.48).abs() < 0.02, "mc {est}");

        let one = xs.slice(ndarray::s![0..1, ..]);
        let single =
            mc_d2(|x| spec.log_target_density(x), |x| spec.log_source_density(x), one).unwrap();
        let r = one.row(0).to_vec();
        let direct = spec.log_target_density(&r) - spec.log_source_density(&r);
        assert!((single - direct).abs() < 1e-12);
        assert!((spec.log_ratio(&r) - direct).abs() < 1e-12);
    }

    #[test]
    fn mc_d2_reports_support_violation() {
        let xs = array![[0.0], [2.0]];
        let err = mc_d2(|_| 0.0, |x| if x[0] > 1.0 { f64::NEG_INFINITY } else { 0.0 }, xs.view())
            .unwrap_err();
        assert!(err.to_string().contains("sample 1"), "{err}");
    }

    #[test]
    fn bound_values() {
        let b = BoundParams { ess_star: 1.0, pdim: 1, n: 1000, delta: 0.05 };
        let v = generalization_bound(&b).unwrap();
        assert!((v - 0.46651).abs() < 1e-4);
        // independent 30-digit evaluation
        assert!((v - 0.466_446_943_424_102).abs() < 1e-12);
        let half = generalization_bound(&BoundParams { ess_star: 0.5, ..b }).unwrap();
        assert!((half / v - 2f64.sqrt()).abs() < 1e-12);
        let shifted = generalization_bound(&BoundParams { ess_star: (-2.5f64).exp(), ..b }).unwrap();
        assert!((shifted - 1.62845).abs() < 1e-3);
    }

    #[test]
    fn bound_rejects_bad_params() {
        let b = BoundParams { ess_star: 1.0, pdim: 1, n: 1000, delta: 0.05 };
        assert!(generalization_bound(&BoundParams { pdim: 1001, ..b }).is_err());
        assert!(generalization_bound(&BoundParams { delta: 1.0, ..b }).is_err());
        assert!(generalization_bound(&BoundParams { delta: 0.0, ..b }).is_err());
        assert!(generalization_bound(&BoundParams { ess_star: 0.0, ..b }).is_err());
        assert!(generalization_bound(&BoundParams { ess_star: 1.5, ..b }).is_err());
    }

    #[test]
    fn divergence_grows_with_dimension() {
        for lambda in [0.05, 0.1, 0.25, 0.5] {
            let mut prev = (0.0, 1.0);
            for d in 1..=32 {
                let d2 = gaussian_d2(&GaussianPairSpec::isotropic_shift(d, lambda).unwrap());
                let ess = population_ess(d2).unwrap();
                assert!(d2 > prev.0 && ess < prev.1);
                prev = (d2, ess);
            }
        }
    }

    #[test]
    fn bound_is_monotone() {
        let base = BoundParams { ess_star: 0.5, pdim: 3, n: 500, delta: 0.1 };
        let f = |b: BoundParams| generalization_bound(&b).unwrap();
        assert!(f(BoundParams { ess_star: 0.6, ..base }) < f(base));
        assert!(f(BoundParams { delta: 0.05, ..base }) > f(base));
    }

    proptest! {
        #[test]
        fn ess_is_scale_invariant(v in prop::collection::vec(0.0f64..100.0, 1..60)) {
            prop_assume!(v.iter().any(|&x| x > 0.0));
            let w = wv(&v);
            let e = empirical_ess(&w);
            for c in [1e-6, 1.0, 1e6] {
                prop_assert!((empirical_ess(&w.scaled(c).unwrap()) - e).abs() < 1e-12);
            }
        }

        #[test]
        fn ess_at_most_one_with_equality_iff_flat(v in prop::collection::vec(0.0f64..10.0, 2..40)) {
            prop_assume!(v.iter().any(|&x| x > 0.0));
            let e = empirical_ess(&wv(&v));
            prop_assert!(e > 0.0 && e <= 1.0);
            let pos: Vec<f64> = v.iter().copied().filter(|&x| x > 0.0).collect();
            let flat = pos.len() == v.len() && pos.iter().all(|&x| x == pos[0]);
            if !flat {
                prop_assert!(e < 1.0 - 1e-12);
            }
        }
    }
}
