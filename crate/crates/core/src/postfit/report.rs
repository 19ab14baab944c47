//! Markdown and JSON reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{bic, lr_test, rho_squared, LrTest, Numeraire, PostfitError, Tenure, VotSummary};
use crate::mslestim::{EstimationResult, KrInterval};

/// Null log-likelihood of the published sample.
pub const PUBLISHED_NULL_LOGLIK: f64 = -7196.3;
/// 512 respondents times 8 tasks.
pub const PUBLISHED_OBSERVATIONS: usize = 4096;

/// One model as it enters a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub label: String,
    pub loglik: f64,
    pub n_parameters: usize,
    /// Degrees of freedom of the test against the last model; defaults to
    /// the difference in parameter counts.
    pub lr_df: Option<usize>,
    /// A BIC printed elsewhere, checked against the formula.
    pub published_bic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub n_parameters: usize,
    pub loglik: f64,
    pub rho_squared: f64,
    pub bic: f64,
    pub published_bic: Option<f64>,
    /// Test against the last (most general) model.
    pub lr: Option<LrTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub null_loglik: f64,
    pub n_observations: usize,
    pub rows: Vec<ComparisonRow>,
    /// Discrepancies between printed and computed BIC values.
    pub notes: Vec<String>,
}

impl ComparisonReport {
    pub fn new(models: &[ModelFit], null_loglik: f64, n_observations: usize) -> Result<Self, PostfitError> {
        let reference = models.last();
        let ln_nt = (n_observations as f64).ln();
        let mut rows = Vec::with_capacity(models.len());
        let mut notes = Vec::new();
        for (i, m) in models.iter().enumerate() {
            let b = bic(m.loglik, m.n_parameters, n_observations);
            let lr = match reference {
                Some(r) if i + 1 < models.len() => {
                    let df = m.lr_df.unwrap_or(r.n_parameters.saturating_sub(m.n_parameters));
                    Some(lr_test(m.loglik, r.loglik, df)?)
                }
                _ => None,
            };
            if let Some(p) = m.published_bic {
                if (p - b).abs() > 0.005 {
                    let implied = (p + 2.0 * m.loglik) / ln_nt;
                    notes.push(format!(
                        "{}: printed BIC {p:.2} differs from ln(NT)·P − 2·LL = {b:.2} with P = {}; the printed value corresponds to P = {implied:.2}",
                        m.label, m.n_parameters
                    ));
                }
            }
            rows.push(ComparisonRow {
                label: m.label.clone(),
                n_parameters: m.n_parameters,
                loglik: m.loglik,
                rho_squared: rho_squared(m.loglik, null_loglik),
                bic: b,
                published_bic: m.published_bic,
                lr,
            });
        }
        Ok(ComparisonReport { null_loglik, n_observations, rows, notes })
    }

    pub fn from_results(results: &[EstimationResult]) -> Result<Self, PostfitError> {
        let first = results.first();
        let fits: Vec<ModelFit> = results
            .iter()
            .map(|r| ModelFit {
                label: r.spec.class.to_string(),
                loglik: r.loglik,
                n_parameters: r.n_parameters(),
                lr_df: None,
                published_bic: None,
            })
            .collect();
        Self::new(&fits, first.map_or(f64::NAN, |r| r.null_loglik), first.map_or(0, |r| r.n_observations))
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let cells = |f: &dyn Fn(&ComparisonRow) -> String| -> String {
            self.rows.iter().map(|r| format!(" {} |", f(r))).collect()
        };
        let _ = writeln!(s, "| |{}", cells(&|r| r.label.clone()));
        let _ = writeln!(s, "|---|{}", "---:|".repeat(self.rows.len()));
        let _ = writeln!(s, "| No. of parameters |{}", cells(&|r| r.n_parameters.to_string()));
        let _ = writeln!(s, "| Log-likelihood |{}", cells(&|r| format!("{:.2}", r.loglik)));
        let _ = writeln!(s, "| ρ² |{}", cells(&|r| format!("{:.2}", r.rho_squared)));
        let _ = writeln!(s, "| BIC |{}", cells(&|r| format!("{:.2}", r.bic)));
        if self.rows.iter().any(|r| r.published_bic.is_some()) {
            let _ = writeln!(
                s,
                "| Printed BIC |{}",
                cells(&|r| r.published_bic.map_or(String::new(), |b| format!("{b:.2}")))
            );
        }
        if let Some(last) = self.rows.last() {
            let _ = writeln!(s, "| LR test w.r.t. {} | |", last.label);
            let lr = |f: &dyn Fn(&LrTest) -> String| cells(&|r| r.lr.as_ref().map_or(String::new(), f));
            let _ = writeln!(s, "| χ² |{}", lr(&|t| format!("{:.2}", t.statistic)));
            let _ = writeln!(s, "| df |{}", lr(&|t| t.df.to_string()));
            let _ = writeln!(s, "| p |{}", lr(&|t| format_p(t.p_value)));
        }
        let _ = writeln!(
            s,
            "\nNull log-likelihood {:.2}; BIC = ln(NT)·P − 2·LL with NT = {}.",
            self.null_loglik, self.n_observations
        );
        for n in &self.notes {
            let _ = writeln!(s, "\n**BIC discrepancy.** {n}");
        }
        s
    }
}

fn format_p(p: f64) -> String {
    if p < 0.001 {
        "< 0.001".into()
    } else {
        format!("{p:.3}")
    }
}

/// The published model comparison: log-likelihoods, printed parameter
/// counts, printed BIC values and printed test degrees of freedom.
pub fn published_comparison() -> Result<ComparisonReport, PostfitError> {
    let rows = [
        ("C-MNL", -6546.38, 29, Some(12), 13317.34),
        ("EC-MNL", -5382.93, 34, Some(9), 11015.39),
        ("M-MNL I", -5300.72, 40, Some(3), 10900.88),
        ("M-MNL II", -5246.34, 43, None, 10817.07),
    ];
    let fits: Vec<ModelFit> = rows
        .iter()
        .map(|&(label, loglik, n_parameters, lr_df, b)| ModelFit {
            label: label.into(),
            loglik,
            n_parameters,
            lr_df,
            published_bic: Some(b),
        })
        .collect();
    ComparisonReport::new(&fits, PUBLISHED_NULL_LOGLIK, PUBLISHED_OBSERVATIONS)
}

/// `***`, `**`, `*` at the 1%, 5% and 10% levels.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

pub fn estimates_markdown(result: &EstimationResult) -> String {
    let mut s = String::new();
    let c = &result.convergence;
    let _ = writeln!(s, "## {} ({})\n", result.spec.name, result.spec.class);
    let _ = writeln!(
        s,
        "Log-likelihood {:.2} (null {:.2}), {} respondents, {} tasks, {} draws. Status {:?}{}, {} iterations.\n",
        result.loglik,
        result.null_loglik,
        result.n_respondents,
        result.n_observations,
        result.draws.draws,
        c.status,
        c.criterion.map_or(String::new(), |k| format!(" ({k:?})")),
        c.iterations
    );
    let _ = writeln!(s, "| Parameter | Est. | Std. err. | p | |");
    let _ = writeln!(s, "|---|---:|---:|---:|---|");
    for (i, name) in result.names.iter().enumerate() {
        let se = result.std_errors.as_ref().map(|v| v[i]);
        let p = result.p_values.as_ref().map(|v| v[i]);
        let _ = writeln!(
            s,
            "| {name} | {:.4} | {} | {} | {} |",
            result.estimates[i],
            se.map_or("".into(), |v| format!("{v:.4}")),
            p.map_or("".into(), |v| format!("{v:.4}")),
            p.map_or("", significance_stars)
        );
    }
    if !result.implied_sds.is_empty() {
        let _ = writeln!(s, "\n| Implied std. dev. | Est. | Std. err. |");
        let _ = writeln!(s, "|---|---:|---:|");
        for sd in &result.implied_sds {
            let marker = if sd.interval.is_some() { " (Krinsky-Robb)" } else { "" };
            let _ = writeln!(
                s,
                "| {} | {:.4} | {}{marker} |",
                sd.coefficient,
                sd.value,
                sd.std_error.map_or("".into(), |v| format!("{v:.4}"))
            );
        }
    }
    for w in &result.warnings {
        let _ = writeln!(s, "\nWarning: {w}");
    }
    s
}

fn cell(v: f64, iv: &Option<KrInterval>) -> String {
    match iv {
        Some(i) => format!("{v:.2} | [{:.2}, {:.2}]", i.lower, i.upper),
        None => format!("{v:.2} | "),
    }
}

pub fn vot_markdown(rows: &[VotSummary]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "| Value of travel time | Mean | 95%-CI | Std. dev. | 95%-CI | P(VOT < 0) |");
    let _ = writeln!(s, "|---|---:|---|---:|---|---:|");
    let mut last: Option<Numeraire> = None;
    for r in rows {
        if last != Some(r.numeraire) {
            let heading = match r.numeraire {
                Numeraire::TravelCost => format!("In terms of travel cost [{}]", r.numeraire.unit()),
                Numeraire::HousingCost { tenure, income } => format!(
                    "In terms of housing cost [{}], {} (household income = {income:.1} AUD/week)",
                    r.numeraire.unit(),
                    match tenure {
                        Tenure::Owner => "owner",
                        Tenure::Renter => "renter",
                    }
                ),
            };
            let _ = writeln!(s, "| **{heading}** | | | | | |");
            last = Some(r.numeraire);
        }
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.3} |",
            r.mode.label(),
            cell(r.mean, &r.mean_interval),
            cell(r.sd, &r.sd_interval),
            r.negative_share
        );
    }
    s
}
