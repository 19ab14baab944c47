//! Maximum simulated likelihood estimation, asymptotic covariance and
//! Krinsky-Robb intervals.

pub mod bfgs;
mod hessian;
mod kr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

pub use bfgs::{BfgsOptions, Criterion, Termination};
pub use hessian::{
    covariance, gradient_hessian, hessian_from_values, jacobian_of_gradient, numerical_hessian, symmetrize,
    symmetry_defect, HESSIAN_STEP,
};
pub use kr::{
    covariance_factor, kr_sample, krinsky_robb_interval, quantile_sorted, summarize, KrInterval, KrSample,
    DEFAULT_KR_DRAWS, MIN_KR_DRAWS,
};

use crate::dataset::ChoiceDataset;
use crate::modelspec::{embed_parameters, ModelClass, ModelSpec, ParamRole, SpecError};
use crate::qmc::DrawTensor;
use crate::simlik::{LikError, LikelihoodProblem};

#[derive(Debug, Error)]
pub enum EstimError {
    #[error("no convergence within {} iterations", .0.convergence.iterations)]
    MaxIterations(Box<EstimationResult>),
    #[error("line search failed to improve the objective")]
    LineSearchFailure(Box<EstimationResult>),
    #[error("objective or gradient is not finite")]
    NonFiniteObjective(Box<EstimationResult>),
    #[error("Hessian is not negative definite; check for parameters on a boundary or unidentified")]
    NotNegativeDefinite,
    #[error("Hessian entry ({row}, {col}) is not finite")]
    NonFiniteEntry { row: usize, col: usize },
    #[error("covariance matrix is not positive semi-definite")]
    CovNotPsd,
    #[error("no covariance available")]
    NoCovariance,
    #[error("Krinsky-Robb needs at least {MIN_KR_DRAWS} draws, got {0}")]
    TooFewKrDraws(usize),
    #[error("start vector has {got} values, spec has {expected} parameters")]
    StartLength { expected: usize, got: usize },
    #[error(transparent)]
    Likelihood(#[from] LikError),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

impl EstimError {
    /// The last iterate carried by an optimizer failure.
    pub fn last_iterate(&self) -> Option<&EstimationResult> {
        match self {
            EstimError::MaxIterations(r) | EstimError::LineSearchFailure(r) | EstimError::NonFiniteObjective(r) => {
                Some(r)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub bfgs: BfgsOptions,
    /// Starting values; defaults to [`default_start`].
    pub start: Option<Vec<f64>>,
    /// Differentiate the analytic gradient at the optimum for standard errors.
    pub compute_covariance: bool,
    pub kr_draws: usize,
    /// Seeds Krinsky-Robb draws and restart perturbations.
    pub seed: u64,
    /// Extra runs from perturbed starts; the best log-likelihood wins.
    pub restarts: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            bfgs: BfgsOptions::default(),
            start: None,
            compute_covariance: true,
            kr_draws: DEFAULT_KR_DRAWS,
            seed: 1,
            restarts: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIterations,
    LineSearchFailure,
    NonFiniteObjective,
    /// Estimates supplied from elsewhere, not produced by this optimizer.
    Supplied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub status: Status,
    pub criterion: Option<Criterion>,
    pub iterations: usize,
    pub evaluations: usize,
    /// Infinity norm of the log-likelihood gradient at the estimates.
    pub gradient_norm: f64,
    pub start_loglik: f64,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawInfo {
    pub kind: String,
    pub seed: u64,
    /// Draws per respondent actually used (1 when nothing is random).
    pub draws: usize,
    pub dimensions: usize,
    pub nudged: usize,
}

/// Standard deviation of a random coefficient's underlying normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpliedSd {
    pub coefficient: String,
    pub value: f64,
    pub std_error: Option<f64>,
    /// Set for correlated coefficients, whose sd is a Cholesky row norm.
    pub interval: Option<KrInterval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub spec: ModelSpec,
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub std_errors: Option<Vec<f64>>,
    pub p_values: Option<Vec<f64>>,
    /// Row-major.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub loglik: f64,
    pub null_loglik: f64,
    pub convergence: Convergence,
    pub draws: DrawInfo,
    pub n_respondents: usize,
    pub n_observations: usize,
    pub data_sha256: Option<String>,
    pub implied_sds: Vec<ImpliedSd>,
    pub kr_draws: usize,
    pub kr_seed: u64,
    pub underflow_count: usize,
    pub warnings: Vec<String>,
}

impl EstimationResult {
    /// Wraps externally obtained estimates (for example published values)
    /// so derived quantities can be computed from them. Log-likelihoods are
    /// NaN and the status is [`Status::Supplied`].
    pub fn supplied(
        spec: &ModelSpec,
        estimates: Vec<f64>,
        covariance: Option<&DMatrix<f64>>,
        kr_seed: u64,
    ) -> Result<Self, EstimError> {
        let p = spec.count_parameters();
        if estimates.len() != p {
            return Err(EstimError::StartLength { expected: p, got: estimates.len() });
        }
        let mut result = EstimationResult {
            spec: spec.clone(),
            names: spec.parameter_names(),
            estimates,
            std_errors: None,
            p_values: None,
            covariance: None,
            loglik: f64::NAN,
            null_loglik: f64::NAN,
            convergence: Convergence {
                status: Status::Supplied,
                criterion: None,
                iterations: 0,
                evaluations: 0,
                gradient_norm: f64::NAN,
                start_loglik: f64::NAN,
                restarts: 0,
            },
            draws: DrawInfo { kind: "none".into(), seed: 0, draws: 0, dimensions: spec.n_draw_dims(), nudged: 0 },
            n_respondents: 0,
            n_observations: 0,
            data_sha256: None,
            implied_sds: Vec::new(),
            kr_draws: DEFAULT_KR_DRAWS,
            kr_seed,
            underflow_count: 0,
            warnings: Vec::new(),
        };
        match covariance {
            Some(cov) => attach_covariance(&mut result, cov)?,
            None => result.implied_sds = implied_sds(&result, None)?,
        }
        Ok(result)
    }

    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.estimates[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        let i = self.index(name)?;
        self.std_errors.as_ref().map(|s| s[i])
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn covariance_matrix(&self) -> Option<DMatrix<f64>> {
        let c = self.covariance.as_ref()?;
        let p = c.len();
        Some(DMatrix::from_fn(p, p, |i, j| c[i][j]))
    }

    pub fn n_parameters(&self) -> usize {
        self.estimates.len()
    }
}

/// Two-sided normal p-value of `estimate / se`.
pub fn p_value(estimate: f64, se: f64) -> f64 {
    erfc((estimate / se).abs() / std::f64::consts::SQRT_2)
}

/// Zeros for means, fixed coefficients and intercepts; 0.1 for scales,
/// error scales and Cholesky diagonals; zero Cholesky off-diagonals.
pub fn default_start(spec: &ModelSpec) -> Vec<f64> {
    spec.parameters()
        .iter()
        .map(|p| match p.role {
            ParamRole::Scale(_) | ParamRole::ErrorScale(_) => 0.1,
            ParamRole::Cholesky { row, col, .. } if row == col => 0.1,
            _ => 0.0,
        })
        .collect()
}

/// Maximizes the simulated log-likelihood of `spec` on `data` with `draws`.
pub fn estimate(
    spec: &ModelSpec,
    data: &ChoiceDataset,
    draws: &DrawTensor,
    options: &EstimateOptions,
) -> Result<EstimationResult, EstimError> {
    estimate_problem(&LikelihoodProblem::new(spec, data, draws)?, draws, options)
}

struct Run {
    outcome: bfgs::BfgsOutcome,
    start_loglik: f64,
}

fn optimize(problem: &LikelihoodProblem<'_>, start: &[f64], opts: &BfgsOptions) -> Result<Run, EstimError> {
    let mut start_loglik = None;
    let outcome = bfgs::minimize(
        |t| {
            let r = problem.evaluate(t, true)?;
            start_loglik.get_or_insert(r.total);
            let g = r.gradient.expect("gradient requested");
            Ok::<_, EstimError>((-r.total, g.iter().map(|v| -v).collect()))
        },
        start,
        opts,
    )?;
    Ok(Run { outcome, start_loglik: start_loglik.unwrap_or(f64::NAN) })
}

pub fn estimate_problem(
    problem: &LikelihoodProblem<'_>,
    draws: &DrawTensor,
    options: &EstimateOptions,
) -> Result<EstimationResult, EstimError> {
    let spec = problem.spec();
    let p = problem.n_params();
    let start = options.start.clone().unwrap_or_else(|| default_start(spec));
    if start.len() != p {
        return Err(EstimError::StartLength { expected: p, got: start.len() });
    }

    let mut best = optimize(problem, &start, &options.bfgs)?;
    for k in 0..options.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        rng.set_stream(1 << 32 | k as u64);
        let perturbed: Vec<f64> = start
            .iter()
            .map(|v| v + 0.1 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let run = optimize(problem, &perturbed, &options.bfgs)?;
        let better = run.outcome.f < best.outcome.f || !best.outcome.f.is_finite();
        if run.outcome.f.is_finite() && better {
            best = Run { start_loglik: best.start_loglik, ..run };
        }
    }

    let out = &best.outcome;
    let theta = out.x.clone();
    let report = problem.evaluate(&theta, false)?;
    let (status, criterion) = match out.termination {
        Termination::Converged(c) => (Status::Converged, Some(c)),
        Termination::MaxIterations => (Status::MaxIterations, None),
        Termination::LineSearchFailure => (Status::LineSearchFailure, None),
        Termination::NonFiniteObjective => (Status::NonFiniteObjective, None),
    };

    let mut warnings = Vec::new();
    if report.underflow_count > 0 {
        warnings.push(format!(
            "{} respondents hit the log-probability floor and contribute no gradient",
            report.underflow_count
        ));
    }
    if report.saturated > 0 {
        warnings.push(format!("{} transformed coefficient values saturated", report.saturated));
    }

    let mut result = EstimationResult {
        spec: spec.clone(),
        names: spec.parameter_names(),
        estimates: theta,
        std_errors: None,
        p_values: None,
        covariance: None,
        loglik: -out.f,
        null_loglik: problem.data().null_log_likelihood(),
        convergence: Convergence {
            status,
            criterion,
            iterations: out.iterations,
            evaluations: out.evaluations,
            gradient_norm: out.gradient.iter().fold(0.0, |m, v| m.max(v.abs())),
            start_loglik: best.start_loglik,
            restarts: options.restarts,
        },
        draws: DrawInfo {
            kind: draws.scramble.clone(),
            seed: draws.seed,
            draws: problem.effective_draws(),
            dimensions: spec.n_draw_dims(),
            nudged: draws.nudged,
        },
        n_respondents: problem.data().n_respondents(),
        n_observations: problem.data().n_tasks(),
        data_sha256: None,
        implied_sds: Vec::new(),
        kr_draws: options.kr_draws,
        kr_seed: options.seed,
        underflow_count: report.underflow_count,
        warnings,
    };

    match status {
        Status::Converged => {}
        Status::MaxIterations => return Err(EstimError::MaxIterations(Box::new(result))),
        Status::LineSearchFailure => return Err(EstimError::LineSearchFailure(Box::new(result))),
        Status::NonFiniteObjective => return Err(EstimError::NonFiniteObjective(Box::new(result))),
        Status::Supplied => unreachable!("the optimizer never reports supplied estimates"),
    }

    if options.compute_covariance {
        match gradient_hessian(problem, &result.estimates).and_then(|h| covariance(&h)) {
            Ok(cov) => attach_covariance(&mut result, &cov)?,
            Err(e @ (EstimError::NotNegativeDefinite | EstimError::NonFiniteEntry { .. })) => {
                result.warnings.push(format!("no standard errors: {e}"));
            }
            Err(e) => return Err(e),
        }
    }
    if result.implied_sds.is_empty() {
        result.implied_sds = implied_sds(&result, None)?;
    }
    Ok(result)
}

/// Stores `cov`, standard errors, p-values and implied sds in `result`.
pub fn attach_covariance(result: &mut EstimationResult, cov: &DMatrix<f64>) -> Result<(), EstimError> {
    let p = result.estimates.len();
    let se: Vec<f64> = (0..p).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    result.p_values = Some(result.estimates.iter().zip(&se).map(|(&e, &s)| p_value(e, s)).collect());
    result.std_errors = Some(se);
    result.covariance = Some((0..p).map(|i| (0..p).map(|j| cov[(i, j)]).collect()).collect());
    let sample = if result.spec.blocks.is_empty() {
        None
    } else {
        Some(kr_sample(&result.estimates, cov, result.kr_draws.max(MIN_KR_DRAWS), result.kr_seed)?)
    };
    result.implied_sds = implied_sds(result, sample.as_ref())?;
    Ok(())
}

/// Parameter indices of the Cholesky row of block member `row`.
fn cholesky_row(spec: &ModelSpec, block: usize, row: usize) -> Vec<usize> {
    spec.parameters()
        .iter()
        .enumerate()
        .filter(|(_, p)| matches!(p.role, ParamRole::Cholesky { block: b, row: r, .. } if b == block && r == row))
        .map(|(i, _)| i)
        .collect()
}

/// `sd` of random coefficient `coefficient` as a function of the parameters.
pub fn implied_sd_function(spec: &ModelSpec, coefficient: usize) -> Option<impl Fn(&[f64]) -> f64 + Sync> {
    let idx: Vec<usize> = match spec.block_of(coefficient) {
        Some((block, row)) => cholesky_row(spec, block, row),
        None => spec
            .parameters()
            .iter()
            .position(|p| p.role == ParamRole::Scale(coefficient))
            .into_iter()
            .collect(),
    };
    (!idx.is_empty()).then(move || move |t: &[f64]| idx.iter().map(|&i| t[i] * t[i]).sum::<f64>().sqrt())
}

fn implied_sds(result: &EstimationResult, sample: Option<&KrSample>) -> Result<Vec<ImpliedSd>, EstimError> {
    let spec = &result.spec;
    let mut out = Vec::new();
    for c in spec.random_coefficients() {
        let Some(g) = implied_sd_function(spec, c) else { continue };
        let value = g(&result.estimates);
        let name = spec.coefficients[c].name.clone();
        let entry = match spec.block_of(c) {
            Some(_) => {
                let interval = sample.map(|s| s.interval(value, &g));
                ImpliedSd { coefficient: name, value, std_error: interval.map(|i| i.sd), interval }
            }
            None => {
                let se = result.std_error(&format!("{name}.sd"));
                ImpliedSd { coefficient: name, value, std_error: se, interval: None }
            }
        };
        out.push(entry);
    }
    Ok(out)
}

/// 95% Krinsky-Robb interval of `g` using the result's covariance and seed.
pub fn krinsky_robb(
    result: &EstimationResult,
    g: impl Fn(&[f64]) -> f64 + Sync,
    draws: usize,
) -> Result<KrInterval, EstimError> {
    let cov = result.covariance_matrix().ok_or(EstimError::NoCovariance)?;
    krinsky_robb_interval(&result.estimates, &cov, g, draws, result.kr_seed)
}

/// Estimates the nested ladder C-MNL, EC-MNL, M-MNL I, M-MNL II up to
/// `full`'s class on the same data and draws. Each rung starts from the
/// previous rung's estimates, with new scales at 0.1. Covariances are
/// computed only where `covariance_for` says so.
pub fn estimate_ladder(
    full: &ModelSpec,
    data: &ChoiceDataset,
    draws: &DrawTensor,
    options: &EstimateOptions,
    covariance_for: impl Fn(ModelClass) -> bool,
) -> Result<Vec<EstimationResult>, EstimError> {
    let classes = [ModelClass::Cmnl, ModelClass::Ecmnl, ModelClass::Mmnl1, ModelClass::Mmnl2];
    let mut out: Vec<EstimationResult> = Vec::new();
    for class in classes.into_iter().filter(|&c| c <= full.class) {
        let spec = if class == full.class { full.clone() } else { full.reduced(class) };
        let start = match out.last() {
            None => default_start(&spec).iter().map(|_| 0.0).collect(),
            Some(prev) => embed_parameters(&prev.spec, &prev.estimates, &spec, 0.1),
        };
        let opts = EstimateOptions { start: Some(start), compute_covariance: covariance_for(class), ..options.clone() };
        out.push(estimate(&spec, data, draws, &opts)?);
    }
    Ok(out)
}
