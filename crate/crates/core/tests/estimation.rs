//! Estimation checked against closed forms and against itself.

mod common;

use std::collections::BTreeMap;

use mixlogit_core::dataset::{ChoiceDataset, Covariate};
use mixlogit_core::modelspec::{bundled_spec, ModelSpec};
use mixlogit_core::mslestim::{
    estimate, gradient_hessian, numerical_hessian, symmetry_defect, EstimateOptions, Status,
};
use mixlogit_core::qmc::allocate_draws;
use mixlogit_core::simlik::LikelihoodProblem;
use nalgebra::{DMatrix, DVector};

/// Utility linear in every parameter, so the observed information has a
/// closed form.
const LINEAR_SPEC: &str = r#"
name = "linear"
class = "cmnl"

[[coefficients]]
name = "housing_cost"
attribute = "h_cost"
kind = "fixed"
interactions = ["inv_income10"]

[[coefficients]]
name = "rooms"
attribute = "h_rooms"
kind = "fixed"

[[coefficients]]
name = "separate_house"
attribute = "h_separate"
kind = "fixed"

[[coefficients]]
name = "travel_time"
attribute = "m_time"
kind = "fixed"

[[coefficients]]
name = "travel_cost"
attribute = "m_cost"
kind = "fixed"

[[intercepts]]
mode = 2
covariates = ["female"]

[[intercepts]]
mode = 3
covariates = []
"#;

fn linear_spec() -> ModelSpec {
    ModelSpec::from_toml(LINEAR_SPEC).unwrap()
}

fn linear_truth(spec: &ModelSpec) -> Vec<f64> {
    let values: BTreeMap<&str, f64> = [
        ("housing_cost", -0.4),
        ("rooms", 0.3),
        ("separate_house", 0.6),
        ("travel_time", -2.5),
        ("travel_cost", -1.5),
        ("asc.sdc.baseline", -1.0),
        ("asc.sdc.female", 0.3),
        ("asc.pt.baseline", -0.7),
    ]
    .into_iter()
    .collect();
    spec.parameter_names().iter().map(|n| values[n.as_str()]).collect()
}

/// Derivative of each alternative's utility with respect to every
/// parameter, built by name.
fn design_rows(spec: &ModelSpec, data: &ChoiceDataset) -> Vec<(Vec<DVector<f64>>, usize)> {
    let names = spec.parameter_names();
    let mut out = Vec::new();
    for task in &data.tasks {
        let resp = data.respondents.iter().find(|r| r.id == task.respondent_id).unwrap();
        let rows = task
            .alternatives
            .iter()
            .map(|alt| {
                DVector::from_iterator(
                    names.len(),
                    names.iter().map(|n| {
                        let m = alt.mode.short_name();
                        if let Some(c) = spec.coefficients.iter().find(|c| &c.name == n) {
                            let x = alt.housing_attrs.get(&c.attribute).or(alt.mode_attrs.get(&c.attribute)).copied().unwrap();
                            x * c.interactions.iter().map(|&k| resp.covariate(k)).product::<f64>()
                        } else if *n == format!("asc.{m}.baseline") {
                            1.0
                        } else if let Some(cov) = n.strip_prefix(&format!("asc.{m}.")) {
                            resp.covariate(Covariate::parse(cov).unwrap())
                        } else {
                            0.0
                        }
                    }),
                )
            })
            .collect();
        out.push((rows, task.chosen));
    }
    out
}

/// `-sum_t sum_j p_j (x_j - xbar)(x_j - xbar)'`.
fn mnl_hessian(rows: &[(Vec<DVector<f64>>, usize)], theta: &[f64]) -> DMatrix<f64> {
    let p = theta.len();
    let theta = DVector::from_column_slice(theta);
    let mut h = DMatrix::zeros(p, p);
    for (xs, _) in rows {
        let v: Vec<f64> = xs.iter().map(|x| x.dot(&theta)).collect();
        let top = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = v.iter().map(|u| (u - top).exp()).collect();
        let s: f64 = e.iter().sum();
        let mut xbar = DVector::zeros(p);
        for (x, ej) in xs.iter().zip(&e) {
            xbar += x * (ej / s);
        }
        for (x, ej) in xs.iter().zip(&e) {
            let d = x - &xbar;
            h -= (&d * d.transpose()) * (ej / s);
        }
    }
    h
}

#[test]
fn cmnl_standard_errors_match_closed_form_information() {
    let spec = linear_spec();
    let truth = linear_truth(&spec);
    let data = common::simulated(&spec, &truth, 400, 11);
    let draws = allocate_draws(&spec, 400, 1, 1).unwrap();
    let result = estimate(&spec, &data, &draws, &EstimateOptions::default()).unwrap();
    assert_eq!(result.convergence.status, Status::Converged);

    let h = mnl_hessian(&design_rows(&spec, &data), &result.estimates);
    let cov = (-h).try_inverse().unwrap();
    let se = result.std_errors.as_ref().unwrap();
    for (i, name) in result.names.iter().enumerate() {
        let oracle = cov[(i, i)].sqrt();
        assert!((se[i] - oracle).abs() <= 1e-3 * oracle, "{name}: {} vs {oracle}", se[i]);
        // Recovery at N=400.
        assert!((result.estimates[i] - truth[i]).abs() < 4.0 * oracle, "{name}");
    }
}

#[test]
fn restarting_at_the_optimum_takes_at_most_one_iteration() {
    let spec = linear_spec();
    let truth = linear_truth(&spec);
    let data = common::simulated(&spec, &truth, 150, 4);
    let draws = allocate_draws(&spec, 150, 1, 1).unwrap();
    let opts = EstimateOptions { compute_covariance: false, ..Default::default() };
    let first = estimate(&spec, &data, &draws, &opts).unwrap();
    let again = estimate(&spec, &data, &draws, &EstimateOptions { start: Some(first.estimates.clone()), ..opts }).unwrap();
    assert!(again.convergence.iterations <= 1, "{} iterations", again.convergence.iterations);
    assert!((again.loglik - first.loglik).abs() < 1e-8);
}

#[test]
fn hessian_routes_agree() {
    let spec = bundled_spec("paper_mmnl2").unwrap().reduced(mixlogit_core::modelspec::ModelClass::Mmnl1);
    let data = common::reference_panel(&bundled_spec("paper_mmnl2").unwrap(), 40, 6);
    let draws = allocate_draws(&spec, 40, 32, 2).unwrap();
    let problem = LikelihoodProblem::new(&spec, &data, &draws).unwrap();
    let theta: Vec<f64> = mixlogit_core::mslestim::default_start(&spec)
        .iter()
        .enumerate()
        .map(|(i, v)| v + 0.05 * ((i % 5) as f64 - 2.0))
        .collect();
    let a = numerical_hessian(&problem, &theta).unwrap();
    let b = gradient_hessian(&problem, &theta).unwrap();
    assert!(symmetry_defect(&a) < 1e-12 && symmetry_defect(&b) < 1e-12);
    let scale = a.amax().max(1.0);
    let diff = (&a - &b).amax();
    assert!(diff <= 1e-4 * scale, "max difference {diff} at scale {scale}");
}

#[test]
fn estimation_is_deterministic() {
    let full = bundled_spec("paper_mmnl2").unwrap();
    let spec = full.reduced(mixlogit_core::modelspec::ModelClass::Ecmnl);
    let data = common::reference_panel(&full, 60, 2);
    let draws = allocate_draws(&spec, 60, 16, 3).unwrap();
    let opts = EstimateOptions { bfgs: mixlogit_core::mslestim::BfgsOptions { max_iter: 40, ..Default::default() }, ..Default::default() };
    let run = || match estimate(&spec, &data, &draws, &opts) {
        Ok(r) => r,
        Err(e) => e.last_iterate().expect("carries the last iterate").clone(),
    };
    let a = serde_json::to_string(&run()).unwrap();
    let b = serde_json::to_string(&run()).unwrap();
    assert_eq!(a, b);
}
