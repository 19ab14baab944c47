//! Krinsky-Robb simulation: parameter draws from the asymptotic normal
//! distribution of the estimates, pushed through a derived quantity.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EstimError;

pub const DEFAULT_KR_DRAWS: usize = 10_000;
pub const MIN_KR_DRAWS: usize = 1_000;

/// Parameter draws `theta_r = theta_hat + L z_r`, one row per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct KrSample {
    pub rows: Vec<Vec<f64>>,
}

/// A 95% percentile interval with the point value and the sample sd.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrInterval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub sd: f64,
}

impl KrSample {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `g` at every row, in row order.
    pub fn apply(&self, g: impl Fn(&[f64]) -> f64 + Sync) -> Vec<f64> {
        self.rows.par_iter().map(|r| g(r)).collect()
    }

    pub fn interval(&self, point: f64, g: impl Fn(&[f64]) -> f64 + Sync) -> KrInterval {
        summarize(point, self.apply(g))
    }
}

/// Square-root factor of a covariance: Cholesky when positive definite,
/// otherwise a symmetric eigen factor with round-off negatives set to zero.
pub fn covariance_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>, EstimError> {
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(EstimError::CovNotPsd);
    }
    if let Some(c) = cov.clone().cholesky() {
        return Ok(c.l());
    }
    let eig = cov.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
        return Err(EstimError::CovNotPsd);
    }
    let root = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&root))
}

/// Draws `count` parameter vectors. Row `r` uses its own seeded stream, so
/// the sample does not depend on the thread count.
pub fn kr_sample(theta: &[f64], cov: &DMatrix<f64>, count: usize, seed: u64) -> Result<KrSample, EstimError> {
    let p = theta.len();
    if cov.nrows() != p || cov.ncols() != p {
        return Err(EstimError::CovNotPsd);
    }
    let l = covariance_factor(cov)?;
    let rows = (0..count)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let z = DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let d = &l * z;
            theta.iter().zip(d.iter()).map(|(t, e)| t + e).collect()
        })
        .collect();
    Ok(KrSample { rows })
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(point: f64, mut values: Vec<f64>) -> KrInterval {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    values.sort_by(f64::total_cmp);
    KrInterval { point, lower: quantile_sorted(&values, 0.025), upper: quantile_sorted(&values, 0.975), sd }
}

/// 95% Krinsky-Robb interval of `g` around `theta` with covariance `cov`.
pub fn krinsky_robb_interval(
    theta: &[f64],
    cov: &DMatrix<f64>,
    g: impl Fn(&[f64]) -> f64 + Sync,
    draws: usize,
    seed: u64,
) -> Result<KrInterval, EstimError> {
    if draws < MIN_KR_DRAWS {
        return Err(EstimError::TooFewKrDraws(draws));
    }
    let point = g(theta);
    Ok(kr_sample(theta, cov, draws, seed)?.interval(point, g))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_matches_hand_computation() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert!((quantile_sorted(&v, 0.5) - 2.5).abs() < 1e-15);
        // h = 3 * 0.025 = 0.075
        assert!((quantile_sorted(&v, 0.025) - 1.075).abs() < 1e-15);
    }

    #[test]
    fn zero_covariance_collapses() {
        let cov = DMatrix::zeros(2, 2);
        let iv = krinsky_robb_interval(&[0.5, -1.0], &cov, |t| t[0] * t[1], 2000, 1).unwrap();
        assert_eq!((iv.lower, iv.upper, iv.point), (-0.5, -0.5, -0.5));
    }

    #[test]
    fn rejects_indefinite_covariance_and_small_samples() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(kr_sample(&[0.0, 0.0], &cov, 10, 1), Err(EstimError::CovNotPsd)));
        let cov = DMatrix::identity(1, 1);
        assert!(matches!(krinsky_robb_interval(&[0.0], &cov, |t| t[0], 999, 1), Err(EstimError::TooFewKrDraws(999))));
    }

    #[test]
    fn singular_covariance_uses_eigen_factor() {
        // Perfectly correlated pair: theta_1 - theta_0 is constant.
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let s = kr_sample(&[0.0, 3.0], &cov, 200, 4).unwrap();
        assert!(s.rows.iter().all(|r| (r[1] - r[0] - 3.0).abs() < 1e-12));
    }

    #[test]
    fn sample_is_seeded() {
        let cov = DMatrix::identity(3, 3);
        let a = kr_sample(&[0.0; 3], &cov, 50, 9).unwrap();
        assert_eq!(a, kr_sample(&[0.0; 3], &cov, 50, 9).unwrap());
        assert_ne!(a, kr_sample(&[0.0; 3], &cov, 50, 10).unwrap());
        assert_eq!(a.len(), 50);
    }
}
