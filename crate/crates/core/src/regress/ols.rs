//! Ordinary least squares via Householder QR with column pivoting.
//!
//! Rank-deficient designs (for example a feature that is identically zero)
//! get the basic solution: coefficients of the dependent columns are zero.

use alloc::vec;
use alloc::vec::Vec;

use super::{check_finite, FeatureVector, RegressError, TrainingSample, N_FEATURES};

const COLS: usize = N_FEATURES + 1;
/// Relative threshold on `|R_kk| / |R_00|` below which a column is treated
/// as dependent.
const RANK_TOL: f64 = 1e-10;

/// `y = intercept + coef . x`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    pub coef: [f64; N_FEATURES],
}

impl LinearModel {
    pub fn predict(&self, x: &FeatureVector) -> f64 {
        self.intercept + self.coef.iter().zip(&x.0).map(|(b, v)| b * v).sum::<f64>()
    }
}

pub fn fit_ols(samples: &[TrainingSample]) -> Result<LinearModel, RegressError> {
    if samples.len() < COLS {
        return Err(RegressError::InsufficientSamples { needed: COLS, got: samples.len() });
    }
    check_finite(samples)?;
    let n = samples.len();

    // column-major design matrix [1 | x]
    let mut a = vec![0.0f64; n * COLS];
    for (i, s) in samples.iter().enumerate() {
        a[i] = 1.0;
        for j in 0..N_FEATURES {
            a[(j + 1) * n + i] = s.features.0[j];
        }
    }
    let mut b: Vec<f64> = samples.iter().map(|s| s.label).collect();
    let mut perm: [usize; COLS] = core::array::from_fn(|j| j);
    let mut norms: [f64; COLS] = core::array::from_fn(|j| sq_norm(&a[j * n..(j + 1) * n]));
    let mut diag = [0.0f64; COLS];
    let mut rank = 0;

    for k in 0..COLS {
        let (p, _) =
            (k..COLS).map(|j| (j, norms[j])).fold((k, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        if p != k {
            for i in 0..n {
                a.swap(k * n + i, p * n + i);
            }
            perm.swap(k, p);
            norms.swap(k, p);
        }
        let col = &mut a[k * n..(k + 1) * n];
        let alpha = libm::sqrt(sq_norm(&col[k..]));
        if k > 0 && alpha <= RANK_TOL * diag[0].abs() || alpha == 0.0 {
            break;
        }
        // Householder vector v = x - beta e_k stored in place, beta = -sign(x_k) alpha
        let beta = if col[k] > 0.0 { -alpha } else { alpha };
        col[k] -= beta;
        let vnorm2 = sq_norm(&col[k..]);
        diag[k] = beta;
        rank = k + 1;

        let (head, tail) = a.split_at_mut((k + 1) * n);
        let v = &head[k * n + k..(k + 1) * n];
        for j in (k + 1)..COLS {
            let c = &mut tail[(j - k - 1) * n..(j - k) * n];
            reflect(v, &mut c[k..], vnorm2);
            norms[j] = sq_norm(&c[k + 1..]);
        }
        reflect(v, &mut b[k..], vnorm2);
    }

    // back substitution on the leading `rank` block; R_kk = diag[k]
    let mut coef_pivoted = [0.0f64; COLS];
    for k in (0..rank).rev() {
        let mut s = b[k];
        for j in (k + 1)..rank {
            s -= a[j * n + k] * coef_pivoted[j];
        }
        coef_pivoted[k] = s / diag[k];
    }
    let mut beta = [0.0f64; COLS];
    for (k, &j) in perm.iter().enumerate() {
        beta[j] = coef_pivoted[k];
    }
    let mut coef = [0.0; N_FEATURES];
    coef.copy_from_slice(&beta[1..]);
    Ok(LinearModel { intercept: beta[0], coef })
}

fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `x <- (I - 2 v v^T / |v|^2) x`
fn reflect(v: &[f64], x: &mut [f64], vnorm2: f64) {
    if vnorm2 == 0.0 {
        return;
    }
    let dot: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    let f = 2.0 * dot / vnorm2;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= f * vi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(f: [f64; 5], y: f64) -> TrainingSample {
        TrainingSample::new(FeatureVector(f), y)
    }

    #[test]
    fn recovers_single_slope_with_zero_columns() {
        let samples: Vec<_> = (0..40)
            .map(|i| {
                let xr = (i % 31) as f64;
                sample([0.0, 0.0, 0.0, 0.0, xr], 2.0 + 3.0 * xr)
            })
            .collect();
        let m = fit_ols(&samples).unwrap();
        assert!((m.intercept - 2.0).abs() < 1e-9);
        assert!((m.coef[4] - 3.0).abs() < 1e-9);
        assert!(m.coef[..4].iter().all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn constant_labels() {
        let samples: Vec<_> = (0..20)
            .map(|i| sample([i as f64, (i * 7 % 5) as f64, (i % 3) as f64, (i * i % 11) as f64, (i % 4) as f64], 4.5))
            .collect();
        let m = fit_ols(&samples).unwrap();
        assert!((m.intercept - 4.5).abs() < 1e-9);
        assert!(m.coef.iter().all(|c| c.abs() < 1e-9), "{m:?}");
    }

    #[test]
    fn too_few_samples() {
        let samples = vec![sample([1.0; 5], 1.0); 5];
        assert_eq!(fit_ols(&samples), Err(RegressError::InsufficientSamples { needed: 6, got: 5 }));
        let bad = vec![sample([f64::NAN; 5], 1.0); 8];
        assert_eq!(fit_ols(&bad), Err(RegressError::NonFinite));
    }

    #[test]
    fn collinear_columns_still_fit() {
        // prior == store everywhere: a duplicated column
        let samples: Vec<_> = (0..30)
            .map(|i| {
                let r = (i % 7) as f64;
                let t = (i % 10 + 1) as f64;
                sample([t, r, 0.0, 1.0, r], 1.0 + 0.5 * t + 2.0 * r)
            })
            .collect();
        let m = fit_ols(&samples).unwrap();
        for s in &samples {
            assert!((m.predict(&s.features) - s.label).abs() < 1e-9);
        }
    }
}
