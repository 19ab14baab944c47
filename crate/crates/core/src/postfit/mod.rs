//! Fit metrics, likelihood-ratio tests, value-of-time distributions and
//! reports.

mod report;
mod vot;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

pub use report::{
    estimates_markdown, published_comparison, significance_stars, vot_markdown, ComparisonReport, ComparisonRow,
    ModelFit, PUBLISHED_NULL_LOGLIK, PUBLISHED_OBSERVATIONS,
};
pub use vot::{
    vot_housing_cost, vot_table, vot_travel_cost, Numeraire, Tenure, VotSummary, DEFAULT_OWNER_INCOME,
    DEFAULT_RENTER_INCOME,
};

use crate::mslestim::{EstimError, EstimationResult};

#[derive(Debug, Error)]
pub enum PostfitError {
    #[error("likelihood-ratio statistic is negative: unrestricted {unrestricted} < restricted {restricted}")]
    NegativeStatistic { restricted: f64, unrestricted: f64 },
    #[error("degrees of freedom must be at least 1")]
    InvalidDf,
    #[error("missing coefficient: {0}")]
    MissingCoefficient(String),
    #[error("coefficient `{0}` is not normally distributed (non-identity transform)")]
    NotNormal(String),
    #[error("household income must be positive, got {0}")]
    NonPositiveIncome(f64),
    #[error(transparent)]
    Estimation(#[from] EstimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    pub loglik: f64,
    pub null_loglik: f64,
    pub rho_squared: f64,
    pub bic: f64,
    pub n_parameters: usize,
    pub n_observations: usize,
}

pub fn rho_squared(loglik: f64, null_loglik: f64) -> f64 {
    1.0 - loglik / null_loglik
}

/// `ln(NT) P - 2 LL`.
pub fn bic(loglik: f64, n_parameters: usize, n_observations: usize) -> f64 {
    (n_observations as f64).ln() * n_parameters as f64 - 2.0 * loglik
}

pub fn fit_metrics_from(loglik: f64, null_loglik: f64, n_parameters: usize, n_observations: usize) -> FitMetrics {
    FitMetrics {
        loglik,
        null_loglik,
        rho_squared: rho_squared(loglik, null_loglik),
        bic: bic(loglik, n_parameters, n_observations),
        n_parameters,
        n_observations,
    }
}

/// Metrics of an estimated model; the null log-likelihood is the
/// equal-shares value over each task's available alternatives.
pub fn fit_metrics(result: &EstimationResult) -> FitMetrics {
    fit_metrics_from(result.loglik, result.null_loglik, result.n_parameters(), result.n_observations)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// `chi2 = 2 (LL_u - LL_r)` with its upper-tail p-value.
pub fn lr_test(restricted: f64, unrestricted: f64, df: usize) -> Result<LrTest, PostfitError> {
    if df == 0 {
        return Err(PostfitError::InvalidDf);
    }
    if unrestricted < restricted {
        return Err(PostfitError::NegativeStatistic { restricted, unrestricted });
    }
    let statistic = 2.0 * (unrestricted - restricted);
    let dist = ChiSquared::new(df as f64).expect("positive df");
    Ok(LrTest { statistic, df, p_value: dist.sf(statistic) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bic_direct_arithmetic() {
        assert!((bic(-100.0, 2, 100) - 209.210340371976).abs() < 1e-9);
    }

    #[test]
    fn rho_squared_of_null_fit_is_zero() {
        assert_eq!(rho_squared(-7196.3, -7196.3), 0.0);
        assert!((rho_squared(-5246.34, -7196.3) - 0.271).abs() < 5e-4);
    }

    #[test]
    fn lr_statistics() {
        let t = lr_test(-5300.72, -5246.34, 3).unwrap();
        assert!((t.statistic - 108.76).abs() < 1e-9);
        assert!(t.p_value < 1e-3);
        let t = lr_test(-10.0, -10.0, 2).unwrap();
        assert_eq!((t.statistic, t.p_value), (0.0, 1.0));
        assert!(matches!(lr_test(-1.0, -2.0, 1), Err(PostfitError::NegativeStatistic { .. })));
        assert!(matches!(lr_test(-2.0, -1.0, 0), Err(PostfitError::InvalidDf)));
    }

    #[test]
    fn chi_square_tail_matches_closed_form_for_two_df() {
        // With 2 df the survival function is exp(-x / 2).
        let t = lr_test(-10.0, -7.5, 2).unwrap();
        assert!((t.p_value - (-2.5f64).exp()).abs() < 1e-12);
    }
}
