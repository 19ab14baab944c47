#![allow(dead_code)]

use mixlogit_core::dataset::ChoiceDataset;
use mixlogit_core::designsim::{
    generate_design, generate_population, simulate_choices, DesignPlan, Marginals, TruthParameters,
};
use mixlogit_core::modelspec::ModelSpec;

/// Synthetic panel simulated from `spec` at `theta`.
pub fn simulated(spec: &ModelSpec, theta: &[f64], n: usize, seed: u64) -> ChoiceDataset {
    let pop = generate_population(n, seed, &Marginals::default());
    let skeleton = generate_design(&DesignPlan::default(), &pop, seed).unwrap();
    let truth = TruthParameters::from_theta(spec, theta);
    simulate_choices(&skeleton, spec, &truth, seed + 1).unwrap()
}

/// Reference-estimate panel for a bundled spec.
pub fn reference_panel(spec: &ModelSpec, n: usize, seed: u64) -> ChoiceDataset {
    let theta = TruthParameters::reference(spec).unwrap().theta_for(spec).unwrap();
    simulated(spec, &theta, n, seed)
}

/// Deterministic utilities of every alternative in `task`, evaluated by
/// parameter name. Only for specs without random terms.
pub fn fixed_utilities(
    spec: &ModelSpec,
    theta: &[f64],
    resp: &mixlogit_core::dataset::Respondent,
    task: &mixlogit_core::dataset::ChoiceTask,
) -> Vec<f64> {
    use mixlogit_core::dataset::Covariate;
    use mixlogit_core::modelspec::Transform;
    let val: std::collections::BTreeMap<String, f64> =
        spec.parameter_names().into_iter().zip(theta.iter().copied()).collect();
    task.alternatives
        .iter()
        .map(|alt| {
            let mut v = 0.0;
            for c in &spec.coefficients {
                let b = match c.transform {
                    Transform::Identity => val[&c.name],
                    Transform::Exponential => val[&c.name].exp(),
                    Transform::NegativeExponential => -val[&c.name].exp(),
                };
                let x = if c.attribute.starts_with("h_") {
                    alt.housing_attrs[&c.attribute]
                } else if c.binding.applies_to(alt.mode) {
                    alt.mode_attrs[&c.attribute]
                } else {
                    0.0
                };
                v += b * x * c.interactions.iter().map(|&k| resp.covariate(k)).product::<f64>();
            }
            let m = alt.mode.short_name();
            if let Some(base) = val.get(&format!("asc.{m}.baseline")) {
                v += base;
                for cov in Covariate::ALL {
                    if let Some(g) = val.get(&format!("asc.{m}.{}", cov.name())) {
                        v += g * resp.covariate(cov);
                    }
                }
            }
            v
        })
        .collect()
}

/// Logit probabilities from utilities.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let top = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|u| (u - top).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}
