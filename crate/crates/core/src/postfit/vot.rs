//! Value of travel time as the ratio of a normal time coefficient to a fixed
//! cost coefficient, so the distribution is normal.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::PostfitError;
use crate::dataset::{Covariate, Mode};
use crate::modelspec::{ModelSpec, ParamRole, Transform};
use crate::mslestim::{implied_sd_function, kr_sample, EstimationResult, KrInterval, KrSample, MIN_KR_DRAWS};

/// Mean weekly household income of owners, AUD/week.
pub const DEFAULT_OWNER_INCOME: f64 = 2244.7;
/// Mean weekly household income of renters, AUD/week.
pub const DEFAULT_RENTER_INCOME: f64 = 1558.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tenure {
    Owner,
    Renter,
}

impl Tenure {
    fn covariate(self) -> Covariate {
        match self {
            Tenure::Owner => Covariate::Owner,
            Tenure::Renter => Covariate::Renter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Numeraire {
    /// AUD per hour.
    TravelCost,
    /// 10 AUD per week per hour, at a weekly household income.
    HousingCost { tenure: Tenure, income: f64 },
}

impl Numeraire {
    pub fn unit(&self) -> &'static str {
        match self {
            Numeraire::TravelCost => "AUD/h",
            Numeraire::HousingCost { .. } => "10 AUD/week/h",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotSummary {
    pub mode: Mode,
    pub numeraire: Numeraire,
    pub mean: f64,
    pub sd: f64,
    /// Krinsky-Robb intervals; absent without a covariance.
    pub mean_interval: Option<KrInterval>,
    pub sd_interval: Option<KrInterval>,
    /// Share of the normal VOT distribution below zero.
    pub negative_share: f64,
}

type ParamFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

fn coefficient_param(spec: &ModelSpec, c: usize) -> usize {
    spec.parameters().iter().position(|p| p.role == ParamRole::Coefficient(c)).expect("every coefficient has a value")
}

fn time_coefficient(spec: &ModelSpec, mode: Mode) -> Result<(usize, ParamFn, ParamFn), PostfitError> {
    let c = spec
        .coefficients
        .iter()
        .position(|c| c.attribute == "m_time" && c.binding.applies_to(mode))
        .ok_or_else(|| PostfitError::MissingCoefficient(format!("travel time for {}", mode.label())))?;
    if spec.coefficients[c].transform != Transform::Identity {
        return Err(PostfitError::NotNormal(spec.coefficients[c].name.clone()));
    }
    let mean_idx = coefficient_param(spec, c);
    let mean: ParamFn = Box::new(move |t: &[f64]| t[mean_idx]);
    let sd: ParamFn = match implied_sd_function(spec, c) {
        Some(f) => Box::new(f),
        None => Box::new(|_: &[f64]| 0.0),
    };
    Ok((c, mean, sd))
}

/// Utility per unit of the numeraire as a function of the parameters.
fn cost_sensitivity(spec: &ModelSpec, mode: Mode, numeraire: Numeraire) -> Result<ParamFn, PostfitError> {
    let (c, factor) = match numeraire {
        Numeraire::TravelCost => {
            let c = spec
                .coefficients
                .iter()
                .position(|c| c.attribute == "m_cost" && c.binding.applies_to(mode))
                .ok_or_else(|| PostfitError::MissingCoefficient(format!("travel cost for {}", mode.label())))?;
            (c, 1.0)
        }
        Numeraire::HousingCost { tenure, income } => {
            if !(income > 0.0) {
                return Err(PostfitError::NonPositiveIncome(income));
            }
            let c = spec
                .coefficients
                .iter()
                .position(|c| c.attribute == "h_cost" && c.interactions.contains(&tenure.covariate()))
                .ok_or_else(|| PostfitError::MissingCoefficient(format!("housing cost for {tenure:?}")))?;
            let per_income = spec.coefficients[c].interactions.contains(&Covariate::InvIncome10);
            // Utility of 1 AUD/week, then of 10 AUD/week for the reporting unit.
            (c, if per_income { 10.0 / income * 10.0 } else { 10.0 })
        }
    };
    let decl = &spec.coefficients[c];
    if decl.is_random() {
        return Err(PostfitError::MissingCoefficient(format!("fixed cost coefficient (`{}` is random)", decl.name)));
    }
    let idx = coefficient_param(spec, c);
    let transform = decl.transform;
    Ok(Box::new(move |t: &[f64]| transform.apply(t[idx]).0 * factor))
}

struct VotFunctions {
    mean: ParamFn,
    sd: ParamFn,
}

fn vot_functions(spec: &ModelSpec, mode: Mode, numeraire: Numeraire) -> Result<VotFunctions, PostfitError> {
    let (_, time_mean, time_sd) = time_coefficient(spec, mode)?;
    let cost = cost_sensitivity(spec, mode, numeraire)?;
    let cost = std::sync::Arc::new(cost);
    let c2 = cost.clone();
    Ok(VotFunctions {
        mean: Box::new(move |t: &[f64]| time_mean(t) / cost(t)),
        sd: Box::new(move |t: &[f64]| time_sd(t) / c2(t).abs()),
    })
}

fn summarize(
    result: &EstimationResult,
    sample: Option<&KrSample>,
    mode: Mode,
    numeraire: Numeraire,
) -> Result<VotSummary, PostfitError> {
    let f = vot_functions(&result.spec, mode, numeraire)?;
    let mean = (f.mean)(&result.estimates);
    let sd = (f.sd)(&result.estimates);
    let negative_share = if sd > 0.0 {
        Normal::new(mean, sd).expect("positive sd").cdf(0.0)
    } else {
        (mean < 0.0) as u8 as f64
    };
    Ok(VotSummary {
        mode,
        numeraire,
        mean,
        sd,
        mean_interval: sample.map(|s| s.interval(mean, &f.mean)),
        sd_interval: sample.map(|s| s.interval(sd, &f.sd)),
        negative_share,
    })
}

fn sample_for(result: &EstimationResult) -> Result<Option<KrSample>, PostfitError> {
    match result.covariance_matrix() {
        None => Ok(None),
        Some(cov) => Ok(Some(kr_sample(&result.estimates, &cov, result.kr_draws.max(MIN_KR_DRAWS), result.kr_seed)?)),
    }
}

/// VOT in AUD/h: `mean = mu_t / beta_c`, `sd = sigma_t / |beta_c|`.
pub fn vot_travel_cost(result: &EstimationResult, mode: Mode) -> Result<VotSummary, PostfitError> {
    summarize(result, sample_for(result)?.as_ref(), mode, Numeraire::TravelCost)
}

/// VOT in 10 AUD/week/h at a weekly household income, using the
/// tenure-specific housing-cost coefficient.
pub fn vot_housing_cost(
    result: &EstimationResult,
    mode: Mode,
    tenure: Tenure,
    income: f64,
) -> Result<VotSummary, PostfitError> {
    if !(income > 0.0) {
        return Err(PostfitError::NonPositiveIncome(income));
    }
    summarize(result, sample_for(result)?.as_ref(), mode, Numeraire::HousingCost { tenure, income })
}

/// Every mode in travel cost, then owners and renters in housing cost, all
/// from one Krinsky-Robb sample.
pub fn vot_table(
    result: &EstimationResult,
    owner_income: f64,
    renter_income: f64,
) -> Result<Vec<VotSummary>, PostfitError> {
    let sample = sample_for(result)?;
    let mut numeraires = vec![Numeraire::TravelCost];
    for (tenure, income) in [(Tenure::Owner, owner_income), (Tenure::Renter, renter_income)] {
        if !(income > 0.0) {
            return Err(PostfitError::NonPositiveIncome(income));
        }
        numeraires.push(Numeraire::HousingCost { tenure, income });
    }
    let mut out = Vec::new();
    for n in numeraires {
        for mode in Mode::ALL {
            out.push(summarize(result, sample.as_ref(), mode, n)?);
        }
    }
    Ok(out)
}
