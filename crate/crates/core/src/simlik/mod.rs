//! Simulated panel log-likelihood and its analytic gradient.
//!
//! For respondent `n` the simulated choice probability is
//! `P_n = (1/R) sum_r prod_t P(y_nt | beta(z_nr), eta(z_nr))`, evaluated in log
//! space. Respondents are processed in parallel and reduced in respondent
//! order, so results do not depend on the thread count.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{Alternative, ChoiceDataset, ChoiceTask, Respondent};
use crate::modelspec::{Binding, MixingMap, ModelSpec, ParamRole, SpecError, Transform};
use crate::qmc::DrawTensor;

/// Per-respondent log-probabilities below this are clamped and counted.
pub const UNDERFLOW_FLOOR: f64 = -700.0;

#[derive(Debug, Error)]
pub enum LikError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("respondent `{respondent}` task {task}: attribute `{attribute}` missing for alternative {alternative}")]
    MissingAttribute { respondent: String, task: u32, alternative: usize, attribute: String },
    #[error("draw tensor does not fit the problem: {0}")]
    DrawMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LikelihoodReport {
    pub total: f64,
    pub per_respondent: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradient: Option<Vec<f64>>,
    pub draws: usize,
    /// Respondents whose simulated log-probability hit [`UNDERFLOW_FLOOR`].
    pub underflow_count: usize,
    /// Transformed coefficients that saturated at the largest finite value.
    pub saturated: usize,
}

/// `log P(chosen)` under a multinomial logit over `v`.
pub fn log_mnl_prob(v: &[f64], chosen: usize) -> f64 {
    v[chosen] - log_sum_exp(v)
}

pub fn mnl_prob(v: &[f64], chosen: usize) -> f64 {
    log_mnl_prob(v, chosen).exp()
}

/// Max-shifted `ln sum exp`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log of a product of task probabilities.
pub fn log_panel_prob(probs: &[f64]) -> f64 {
    probs.iter().map(|p| p.ln()).sum()
}

pub fn panel_prob(probs: &[f64]) -> f64 {
    log_panel_prob(probs).exp()
}

/// `ln((1/R) sum exp(lp_r))`.
pub fn log_mean_exp(lp: &[f64]) -> f64 {
    log_sum_exp(lp) - (lp.len() as f64).ln()
}

fn attribute_value(
    spec: &ModelSpec,
    c: usize,
    respondent: &Respondent,
    task: &ChoiceTask,
    j: usize,
) -> Result<f64, LikError> {
    let decl = &spec.coefficients[c];
    let alt: &Alternative = &task.alternatives[j];
    let value = match &decl.binding {
        Binding::Housing => alt.housing_attrs.get(&decl.attribute),
        Binding::Modes(modes) if modes.contains(&alt.mode) => alt.mode_attrs.get(&decl.attribute),
        Binding::Modes(_) => return Ok(0.0),
    };
    let value = value.copied().ok_or_else(|| LikError::MissingAttribute {
        respondent: respondent.id.clone(),
        task: task.task_index,
        alternative: j,
        attribute: decl.attribute.clone(),
    })?;
    Ok(decl.interactions.iter().fold(value, |acc, &cov| acc * respondent.covariate(cov)))
}

/// Representative utilities of `task`'s available alternatives for one draw:
/// housing terms + mode terms + mode intercept + `eta[mode]`.
pub fn assemble_utility(
    spec: &ModelSpec,
    theta: &[f64],
    respondent: &Respondent,
    task: &ChoiceTask,
    beta: &[f64],
    eta: &[f64; 3],
) -> Result<Vec<f64>, LikError> {
    if beta.len() != spec.coefficients.len() {
        return Err(SpecError::DimensionMismatch { expected: spec.coefficients.len(), got: beta.len() }.into());
    }
    let intercepts = MixingMap::new(spec, theta)?.intercepts_for(respondent);
    utilities(spec, &intercepts, respondent, task, beta, eta)
}

pub(crate) fn utilities(
    spec: &ModelSpec,
    intercepts: &[f64; 3],
    respondent: &Respondent,
    task: &ChoiceTask,
    beta: &[f64],
    eta: &[f64; 3],
) -> Result<Vec<f64>, LikError> {
    (0..task.alternatives.len())
        .map(|j| {
            let slot = task.alternatives[j].mode.slot();
            let mut v = intercepts[slot] + eta[slot];
            for (c, b) in beta.iter().enumerate() {
                v += b * attribute_value(spec, c, respondent, task, j)?;
            }
            Ok(v)
        })
        .collect()
}

struct CompiledRespondent {
    /// `(first alternative, alternative count, chosen offset)` per task.
    tasks: Vec<(usize, usize, usize)>,
    /// `x[a * n_coef + c]`, attribute times interactions (zero if unbound).
    x: Vec<f64>,
    /// Columns of `x` for the random coefficients, `[a * n_random + i]`.
    x_random: Vec<f64>,
    slot: Vec<usize>,
}

impl CompiledRespondent {
    fn n_alts(&self) -> usize {
        self.slot.len()
    }
}

#[derive(Default)]
struct Scratch {
    v_fixed: Vec<f64>,
    v: Vec<f64>,
    lp: Vec<f64>,
    /// `(1[chosen] - p)` per draw and alternative.
    e: Vec<f64>,
    /// `psi'_i * sum_a e_a x_ai` per draw and random coefficient.
    q: Vec<f64>,
    /// Residual sums per draw and mode slot.
    m: Vec<[f64; 3]>,
    e_bar: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

/// The random part of a [`MixingMap`] flattened for the draw loop.
struct DrawMap {
    /// Mean of each random coefficient's normal, by rank.
    mu: Vec<f64>,
    transforms: Vec<Transform>,
    /// `(rank, tensor dimension, loading)`.
    loadings: Vec<(usize, usize, f64)>,
    /// `(mode slot, tensor dimension, scale)`.
    eta: Vec<(usize, usize, f64)>,
}

impl DrawMap {
    fn new(map: &MixingMap, random: &[usize], rank: &[usize]) -> Self {
        let mut loadings: Vec<(usize, usize, f64)> = map.diag.iter().map(|&(c, d, sd)| (rank[c], d, sd)).collect();
        for b in &map.blocks {
            let mut k = 0;
            for (i, &c) in b.coefs.iter().enumerate() {
                for j in 0..=i {
                    loadings.push((rank[c], b.dims[j], b.chol[k]));
                    k += 1;
                }
            }
        }
        DrawMap {
            mu: random.iter().map(|&c| map.base[c]).collect(),
            transforms: random.iter().map(|&c| map.transforms[c]).collect(),
            loadings,
            eta: map.error_components.clone(),
        }
    }

    /// Fills `alpha`/`beta` by rank and returns the error components.
    #[inline]
    fn realize(&self, z: &[f64], alpha: &mut [f64], beta: &mut [f64]) -> ([f64; 3], usize) {
        alpha.copy_from_slice(&self.mu);
        for &(i, d, w) in &self.loadings {
            alpha[i] += w * z[d];
        }
        let mut saturated = 0;
        for ((b, &a), t) in beta.iter_mut().zip(alpha.iter()).zip(&self.transforms) {
            let (v, sat) = t.apply(a);
            *b = v;
            saturated += sat as usize;
        }
        let mut eta = [0.0; 3];
        for &(slot, d, tau) in &self.eta {
            eta[slot] = tau * z[d];
        }
        (eta, saturated)
    }
}

enum GradTerm {
    Fixed(usize),
    RandomMean(usize),
    /// Random coefficient rank, draw dimension.
    RandomZ(usize, usize),
    /// Mode slot, draw dimension.
    ErrorZ(usize, usize),
    Baseline(usize),
    Shift(usize, crate::dataset::Covariate),
}

struct RespondentResult {
    ll: f64,
    clamped: bool,
    saturated: usize,
    gradient: Vec<f64>,
}

/// A dataset, spec and draw tensor bound together for repeated evaluation.
pub struct LikelihoodProblem<'a> {
    spec: &'a ModelSpec,
    data: &'a ChoiceDataset,
    draws: &'a DrawTensor,
    compiled: Vec<CompiledRespondent>,
    /// Position of each spec draw symbol inside the tensor.
    dims: Vec<usize>,
    random: Vec<usize>,
    rank: Vec<usize>,
    plan: Vec<GradTerm>,
}

impl<'a> LikelihoodProblem<'a> {
    pub fn new(spec: &'a ModelSpec, data: &'a ChoiceDataset, draws: &'a DrawTensor) -> Result<Self, LikError> {
        let symbols = spec.draw_symbols();
        let dims = symbols
            .iter()
            .map(|s| {
                draws
                    .dim_index(s)
                    .ok_or_else(|| LikError::DrawMismatch(format!("draw tensor has no dimension `{s}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if !dims.is_empty() && draws.n_respondents < data.n_respondents() {
            return Err(LikError::DrawMismatch(format!(
                "{} respondents in data, {} in draw tensor",
                data.n_respondents(),
                draws.n_respondents
            )));
        }
        let n_coef = spec.coefficients.len();
        let random: Vec<usize> = spec.random_coefficients().collect();
        let mut rank = vec![usize::MAX; n_coef];
        for (i, &c) in random.iter().enumerate() {
            rank[c] = i;
        }
        let n_random_draws = random.len();

        let mut compiled = Vec::with_capacity(data.n_respondents());
        for (resp, tasks) in data.respondents.iter().zip(data.tasks_by_respondent()) {
            let mut cr = CompiledRespondent { tasks: Vec::new(), x: Vec::new(), x_random: Vec::new(), slot: Vec::new() };
            for task in tasks {
                cr.tasks.push((cr.slot.len(), task.alternatives.len(), task.chosen));
                for (j, alt) in task.alternatives.iter().enumerate() {
                    for c in 0..n_coef {
                        cr.x.push(attribute_value(spec, c, resp, task, j)?);
                    }
                    let row = &cr.x[cr.x.len() - n_coef..];
                    let xr: Vec<f64> = random.iter().map(|&c| row[c]).collect();
                    cr.x_random.extend(xr);
                    cr.slot.push(alt.mode.slot());
                }
            }
            compiled.push(cr);
        }

        let plan = spec
            .parameters()
            .iter()
            .map(|p| match p.role {
                ParamRole::Coefficient(c) if spec.coefficients[c].is_random() => GradTerm::RandomMean(rank[c]),
                ParamRole::Coefficient(c) => GradTerm::Fixed(c),
                ParamRole::Scale(c) => GradTerm::RandomZ(rank[c], dims[rank[c]]),
                ParamRole::Cholesky { block, row, col } => {
                    let members = &spec.blocks[block].members;
                    GradTerm::RandomZ(rank[members[row]], dims[rank[members[col]]])
                }
                ParamRole::ErrorScale(e) => {
                    GradTerm::ErrorZ(spec.error_components[e].mode.slot(), dims[n_random_draws + e])
                }
                ParamRole::InterceptBaseline(k) => GradTerm::Baseline(spec.intercepts[k].mode.slot()),
                ParamRole::InterceptShift(k, j) => {
                    GradTerm::Shift(spec.intercepts[k].mode.slot(), spec.intercepts[k].covariates[j])
                }
            })
            .collect();

        Ok(LikelihoodProblem { spec, data, draws, compiled, dims, random, rank, plan })
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }

    pub fn data(&self) -> &ChoiceDataset {
        self.data
    }

    pub fn n_params(&self) -> usize {
        self.plan.len()
    }

    /// Draws actually averaged per respondent: one when the spec has no
    /// random terms.
    pub fn effective_draws(&self) -> usize {
        if self.dims.is_empty() {
            1
        } else {
            self.draws.n_draws
        }
    }

    pub fn loglik(&self, theta: &[f64]) -> Result<f64, LikError> {
        Ok(self.evaluate(theta, false)?.total)
    }

    pub fn evaluate(&self, theta: &[f64], with_gradient: bool) -> Result<LikelihoodReport, LikError> {
        let map = MixingMap::with_dims(self.spec, theta, &self.dims)?;
        let n_coef = self.spec.coefficients.len();
        // Fixed coefficients do not depend on the draw.
        let mut fixed_beta = vec![0.0; n_coef];
        let mut fixed_deriv = vec![0.0; n_coef];
        let mut fixed_saturated = 0;
        for (c, decl) in self.spec.coefficients.iter().enumerate() {
            if !decl.is_random() {
                let (b, sat) = decl.transform.apply(map.base[c]);
                fixed_beta[c] = b;
                fixed_deriv[c] = decl.transform.derivative_from_value(b);
                fixed_saturated += sat as usize;
            }
        }
        let draw_map = DrawMap::new(&map, &self.random, &self.rank);
        let ctx = EvalContext { map: &map, draw_map: &draw_map, fixed_beta: &fixed_beta, fixed_deriv: &fixed_deriv, with_gradient };
        let results: Vec<RespondentResult> = (0..self.compiled.len())
            .into_par_iter()
            .map_init(Scratch::default, |scratch, n| self.respondent(n, &ctx, scratch))
            .collect();

        let mut total = 0.0;
        let mut per_respondent = Vec::with_capacity(results.len());
        let mut gradient = with_gradient.then(|| vec![0.0; self.plan.len()]);
        let mut underflow_count = 0;
        let mut saturated = fixed_saturated;
        for r in &results {
            total += r.ll;
            per_respondent.push(r.ll);
            underflow_count += r.clamped as usize;
            saturated += r.saturated;
            if let Some(g) = gradient.as_mut() {
                for (acc, v) in g.iter_mut().zip(&r.gradient) {
                    *acc += v;
                }
            }
        }
        Ok(LikelihoodReport {
            total,
            per_respondent,
            gradient,
            draws: self.effective_draws(),
            underflow_count,
            saturated,
        })
    }

    fn respondent(&self, n: usize, ctx: &EvalContext<'_>, s: &mut Scratch) -> RespondentResult {
        let cr = &self.compiled[n];
        let resp = &self.data.respondents[n];
        let n_coef = self.spec.coefficients.len();
        let n_random = self.random.len();
        let n_alts = cr.n_alts();
        let n_draws = self.effective_draws();
        let grad = ctx.with_gradient;

        let intercepts = ctx.map.intercepts_for(resp);
        s.v_fixed.clear();
        for a in 0..n_alts {
            let row = &cr.x[a * n_coef..(a + 1) * n_coef];
            let mut v = intercepts[cr.slot[a]];
            for (c, x) in row.iter().enumerate() {
                if self.rank[c] == usize::MAX {
                    v += ctx.fixed_beta[c] * x;
                }
            }
            s.v_fixed.push(v);
        }
        s.v.resize(n_alts, 0.0);
        s.lp.clear();
        if grad {
            s.e.resize(n_draws * n_alts, 0.0);
            s.q.resize(n_draws * n_random, 0.0);
            s.m.resize(n_draws, [0.0; 3]);
        }
        s.alpha.resize(n_random, 0.0);
        s.beta.resize(n_random, 0.0);
        let mut saturated = 0;
        for r in 0..n_draws {
            let z: &[f64] = if self.dims.is_empty() { &[] } else { self.draws.draw(n, r) };
            let (eta, sat) = ctx.draw_map.realize(z, &mut s.alpha, &mut s.beta);
            saturated += sat;
            let beta_r = &s.beta;
            for a in 0..n_alts {
                let xr = &cr.x_random[a * n_random..(a + 1) * n_random];
                let mut v = s.v_fixed[a] + eta[cr.slot[a]];
                for (b, x) in beta_r.iter().zip(xr) {
                    v += b * x;
                }
                s.v[a] = v;
            }
            // One logarithm per draw: each task's shifted sum lies in
            // [1, J], so the product cannot overflow for realistic panels.
            let mut lp = 0.0;
            let mut denom = 1.0;
            for &(start, len, chosen) in &cr.tasks {
                let v = &mut s.v[start..start + len];
                let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let v_chosen = v[chosen];
                let mut sum = 0.0;
                for x in v.iter_mut() {
                    *x = (*x - max).exp();
                    sum += *x;
                }
                lp += v_chosen - max;
                denom *= sum;
                if denom > 1e250 {
                    lp -= denom.ln();
                    denom = 1.0;
                }
                if grad {
                    let e = &mut s.e[r * n_alts + start..r * n_alts + start + len];
                    for (ej, x) in e.iter_mut().zip(v.iter()) {
                        *ej = -x / sum;
                    }
                    e[chosen] += 1.0;
                }
            }
            s.lp.push(lp - denom.ln());
            if grad {
                let e = &s.e[r * n_alts..(r + 1) * n_alts];
                let q = &mut s.q[r * n_random..(r + 1) * n_random];
                q.iter_mut().for_each(|x| *x = 0.0);
                let mut m = [0.0; 3];
                for (a, &ea) in e.iter().enumerate() {
                    let xr = &cr.x_random[a * n_random..(a + 1) * n_random];
                    for (qi, x) in q.iter_mut().zip(xr) {
                        *qi += ea * x;
                    }
                    m[cr.slot[a]] += ea;
                }
                for (i, t) in ctx.draw_map.transforms.iter().enumerate() {
                    q[i] *= t.derivative_from_value(beta_r[i]);
                }
                s.m[r] = m;
            }
        }

        let mut ll = log_mean_exp(&s.lp);
        let clamped = !(ll >= UNDERFLOW_FLOOR);
        if clamped {
            ll = UNDERFLOW_FLOOR;
        }
        let mut gradient = Vec::new();
        if grad {
            gradient = vec![0.0; self.plan.len()];
            if !clamped {
                self.respondent_gradient(n, cr, resp, ctx, s, &mut gradient);
            }
        }
        RespondentResult { ll, clamped, saturated, gradient }
    }

    fn respondent_gradient(
        &self,
        n: usize,
        cr: &CompiledRespondent,
        resp: &Respondent,
        ctx: &EvalContext<'_>,
        s: &mut Scratch,
        out: &mut [f64],
    ) {
        let n_coef = self.spec.coefficients.len();
        let n_random = self.random.len();
        let n_alts = cr.n_alts();
        let n_draws = s.lp.len();
        // Softmax weights of the per-draw panel log-probabilities.
        let max = s.lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = s.lp.iter().map(|lp| (lp - max).exp()).collect();
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= sum);

        s.e_bar.clear();
        s.e_bar.resize(n_alts, 0.0);
        for (r, &wr) in w.iter().enumerate() {
            for (acc, e) in s.e_bar.iter_mut().zip(&s.e[r * n_alts..(r + 1) * n_alts]) {
                *acc += wr * e;
            }
        }
        let mut m_bar = [0.0; 3];
        for (a, e) in s.e_bar.iter().enumerate() {
            m_bar[cr.slot[a]] += e;
        }

        for (p, term) in self.plan.iter().enumerate() {
            out[p] = match *term {
                GradTerm::Fixed(c) => {
                    let dot: f64 = (0..n_alts).map(|a| s.e_bar[a] * cr.x[a * n_coef + c]).sum();
                    ctx.fixed_deriv[c] * dot
                }
                GradTerm::RandomMean(i) => (0..n_draws).map(|r| w[r] * s.q[r * n_random + i]).sum(),
                GradTerm::RandomZ(i, d) => {
                    (0..n_draws).map(|r| w[r] * s.q[r * n_random + i] * self.draws.draw(n, r)[d]).sum()
                }
                GradTerm::ErrorZ(slot, d) => (0..n_draws).map(|r| w[r] * s.m[r][slot] * self.draws.draw(n, r)[d]).sum(),
                GradTerm::Baseline(slot) => m_bar[slot],
                GradTerm::Shift(slot, cov) => m_bar[slot] * resp.covariate(cov),
            };
        }
    }
}

struct EvalContext<'m> {
    map: &'m MixingMap,
    draw_map: &'m DrawMap,
    fixed_beta: &'m [f64],
    fixed_deriv: &'m [f64],
    with_gradient: bool,
}

/// Simulated log-likelihood with gradient.
pub fn simulated_loglik(
    spec: &ModelSpec,
    theta: &[f64],
    data: &ChoiceDataset,
    draws: &DrawTensor,
) -> Result<LikelihoodReport, LikError> {
    LikelihoodProblem::new(spec, data, draws)?.evaluate(theta, true)
}

pub fn loglik_gradient(
    spec: &ModelSpec,
    theta: &[f64],
    data: &ChoiceDataset,
    draws: &DrawTensor,
) -> Result<Vec<f64>, LikError> {
    let report = LikelihoodProblem::new(spec, data, draws)?.evaluate(theta, true)?;
    Ok(report.gradient.unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mnl_closed_forms() {
        assert!((mnl_prob(&[0.0, 0.0], 0) - 0.5).abs() < 1e-15);
        let v = [0.0, 3f64.ln()];
        assert!((mnl_prob(&v, 0) - 0.25).abs() < 1e-15);
        assert!((mnl_prob(&v, 1) - 0.75).abs() < 1e-15);
        let p = mnl_prob(&[1000.0, 0.0], 0);
        assert!(p <= 1.0 && 1.0 - p < 1e-300);
        assert!(mnl_prob(&[1000.0, 0.0], 1) >= 0.0);
    }

    #[test]
    fn shift_invariance() {
        let v = [0.3, -1.2, 2.2, 0.0];
        let w: Vec<f64> = v.iter().map(|x| x + 517.25).collect();
        for j in 0..4 {
            assert!((mnl_prob(&v, j) - mnl_prob(&w, j)).abs() < 1e-12);
        }
        let total: f64 = (0..4).map(|j| mnl_prob(&v, j)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn panel_products() {
        assert!((panel_prob(&[0.5, 0.25]) - 0.125).abs() < 1e-15);
        assert!((panel_prob(&[0.37]) - 0.37).abs() < 1e-15);
        let p = [1.0 / 6.0; 8];
        assert!((log_panel_prob(&p) - 8.0 * (1.0f64 / 6.0).ln()).abs() < 1e-12);
        assert!((panel_prob(&p) - (1.0f64 / 6.0).powi(8)).abs() < 1e-18);
    }

    #[test]
    fn log_mean_exp_of_equal_values() {
        assert!((log_mean_exp(&[-3.0; 7]) + 3.0).abs() < 1e-15);
        assert!((log_mean_exp(&[-1000.0, -1000.0 + 2f64.ln()]) - (-1000.0 + 1.5f64.ln())).abs() < 1e-12);
    }
}
