//! Small dense kernels on row-major `f64` slices.
//!
//! The mixture code factors many tiny covariance matrices per EM iteration;
//! these routines avoid per-call allocation. Larger one-off factorizations go
//! through `nalgebra`.

/// In-place lower Cholesky factor of a `q x q` row-major SPD matrix. The strict
/// upper triangle is zeroed. Returns `false` if a pivot is not positive.
pub fn cholesky_in_place(a: &mut [f64], q: usize) -> bool {
    debug_assert_eq!(a.len(), q * q);
    for j in 0..q {
        let mut d = a[j * q + j];
        for k in 0..j {
            d -= a[j * q + k] * a[j * q + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * q + j] = d;
        for i in (j + 1)..q {
            let mut s = a[i * q + j];
            for k in 0..j {
                s -= a[i * q + k] * a[j * q + k];
            }
            a[i * q + j] = s / d;
        }
        for k in (j + 1)..q {
            a[j * q + k] = 0.0;
        }
    }
    true
}

/// Squared Mahalanobis norm `|L^{-1} v|^2` given the lower factor `l`.
/// `scratch` must hold at least `q` values.
pub fn forward_solve_sq_norm(l: &[f64], q: usize, v: &[f64], scratch: &mut [f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..q {
        let row = &l[i * q..i * q + i];
        let mut s = v[i];
        for (lk, zk) in row.iter().zip(scratch.iter()) {
            s -= lk * zk;
        }
        let z = s / l[i * q + i];
        scratch[i] = z;
        acc += z * z;
    }
    acc
}

/// `log det` of the matrix whose lower Cholesky factor is `l`.
pub fn log_det_from_cholesky(l: &[f64], q: usize) -> f64 {
    2.0 * (0..q).map(|i| l[i * q + i].ln()).sum::<f64>()
}

/// Numerically stable `log(sum(exp(v)))`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Lower median: the element of rank `(n - 1) / 2` in sorted order.
pub fn lower_median(v: &[f64]) -> f64 {
    assert!(!v.is_empty(), "median of empty slice");
    let mut s = v.to_vec();
    let k = (s.len() - 1) / 2;
    let (_, m, _) = s.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    *m
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation with the `n - 1` denominator.
pub fn sample_std(v: &[f64]) -> f64 {
    let m = mean(v);
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (v.len() as f64 - 1.0)).sqrt()
}
