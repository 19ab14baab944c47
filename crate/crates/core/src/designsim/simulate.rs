//! Choices from the generative model: tastes and error components drawn once
//! per respondent, independent Gumbel(0, 1) noise per alternative and task.

use rand::distr::Open01;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{stream, DesignError, DesignSkeleton, TruthParameters};
use crate::dataset::{ChoiceDataset, ChoiceTask, Respondent};
use crate::modelspec::{MixingMap, ModelSpec, Realization};
use crate::simlik::{utilities, LikError};

const DOMAIN_CHOICE: u64 = 5;
const DOMAIN_COUNTS: u64 = 6;

fn gumbel<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    -(-u.ln()).ln()
}

fn binding_error(spec: &ModelSpec, e: LikError) -> DesignError {
    match e {
        LikError::MissingAttribute { attribute, .. } => {
            let coefficient = spec
                .coefficients
                .iter()
                .find(|c| c.attribute == attribute)
                .map(|c| c.name.clone())
                .unwrap_or_default();
            DesignError::BindingMismatch { coefficient, attribute }
        }
        other => other.into(),
    }
}

fn draw_tastes<R: Rng>(spec: &ModelSpec, map: &MixingMap, rng: &mut R, out: &mut Realization) {
    let z: Vec<f64> = (0..spec.n_draw_dims()).map(|_| rng.sample(StandardNormal)).collect();
    map.realize(&z, out);
}

fn choose<R: Rng>(
    spec: &ModelSpec,
    intercepts: &[f64; 3],
    respondent: &Respondent,
    task: &ChoiceTask,
    tastes: &Realization,
    rng: &mut R,
) -> Result<usize, DesignError> {
    let v = utilities(spec, intercepts, respondent, task, &tastes.beta, &tastes.eta).map_err(|e| binding_error(spec, e))?;
    Ok(argmax_with_noise(&v, rng))
}

fn argmax_with_noise<R: Rng>(v: &[f64], rng: &mut R) -> usize {
    let mut best = 0;
    let mut best_u = f64::NEG_INFINITY;
    for (j, vj) in v.iter().enumerate() {
        let u = vj + gumbel(rng);
        if u > best_u {
            best_u = u;
            best = j;
        }
    }
    best
}

pub fn simulate_choices(
    skeleton: &DesignSkeleton,
    spec: &ModelSpec,
    truth: &TruthParameters,
    seed: u64,
) -> Result<ChoiceDataset, DesignError> {
    let theta = truth.theta_for(spec)?;
    let map = MixingMap::new(spec, &theta)?;
    let tasks_per = skeleton.plan.tasks_per_respondent;
    let chosen: Vec<Vec<usize>> = skeleton
        .respondents
        .par_iter()
        .enumerate()
        .map(|(n, resp)| {
            let mut rng = stream(seed, DOMAIN_CHOICE, n as u64);
            let mut tastes = Realization::new(spec.coefficients.len());
            draw_tastes(spec, &map, &mut rng, &mut tastes);
            let intercepts = map.intercepts_for(resp);
            skeleton.tasks[n * tasks_per..(n + 1) * tasks_per]
                .iter()
                .map(|t| choose(spec, &intercepts, resp, t, &tastes, &mut rng))
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let mut tasks = skeleton.tasks.clone();
    for (t, c) in tasks.iter_mut().zip(chosen.into_iter().flatten()) {
        t.chosen = c;
    }
    let provenance = format!("simulated: spec={} seed={} design={:?}", spec.name, seed, skeleton.plan.strategy);
    Ok(ChoiceDataset::new(skeleton.respondents.clone(), tasks, provenance)?)
}

/// How often each alternative of one task is chosen over `reps` independent
/// respondents sharing `respondent`'s characteristics.
pub fn simulate_choice_counts(
    spec: &ModelSpec,
    theta: &[f64],
    respondent: &Respondent,
    task: &ChoiceTask,
    reps: usize,
    seed: u64,
) -> Result<Vec<usize>, DesignError> {
    let map = MixingMap::new(spec, theta)?;
    let intercepts = map.intercepts_for(respondent);
    let mut rng = stream(seed, DOMAIN_COUNTS, 0);
    let mut tastes = Realization::new(spec.coefficients.len());
    let mut counts = vec![0; task.alternatives.len()];
    if spec.n_draw_dims() == 0 {
        map.realize(&[], &mut tastes);
        let v = utilities(spec, &intercepts, respondent, task, &tastes.beta, &tastes.eta)
            .map_err(|e| binding_error(spec, e))?;
        for _ in 0..reps {
            counts[argmax_with_noise(&v, &mut rng)] += 1;
        }
    } else {
        for _ in 0..reps {
            draw_tastes(spec, &map, &mut rng, &mut tastes);
            counts[choose(spec, &intercepts, respondent, task, &tastes, &mut rng)?] += 1;
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designsim::{generate_design, generate_population, DesignPlan, Marginals};
    use crate::modelspec::bundled_spec;

    fn setup(n: usize) -> (DesignSkeleton, ModelSpec, TruthParameters) {
        let spec = bundled_spec("paper_mmnl2").unwrap();
        let pop = generate_population(n, 1, &Marginals::default());
        let sk = generate_design(&DesignPlan::default(), &pop, 1).unwrap();
        let truth = TruthParameters::reference(&spec).unwrap();
        (sk, spec, truth)
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let (sk, spec, truth) = setup(40);
        let a = simulate_choices(&sk, &spec, &truth, 3).unwrap();
        assert_eq!(a, simulate_choices(&sk, &spec, &truth, 3).unwrap());
        let b = simulate_choices(&sk, &spec, &truth, 4).unwrap();
        assert!(a.tasks.iter().zip(&b.tasks).any(|(x, y)| x.chosen != y.chosen));
    }

    #[test]
    fn missing_attribute_is_a_binding_mismatch() {
        let (mut sk, spec, truth) = setup(3);
        for t in &mut sk.tasks {
            for a in &mut t.alternatives {
                a.housing_attrs.remove("h_rooms");
            }
        }
        match simulate_choices(&sk, &spec, &truth, 1) {
            Err(DesignError::BindingMismatch { coefficient, attribute }) => {
                assert_eq!((coefficient.as_str(), attribute.as_str()), ("rooms", "h_rooms"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dominant_alternative_is_chosen() {
        let (sk, _, _) = setup(1);
        let spec = bundled_spec("paper_cmnl").unwrap();
        let mut theta = vec![0.0; spec.count_parameters()];
        // A large intercept on public transit makes it dominant.
        let k = spec.parameter_names().iter().position(|n| n == "asc.pt.baseline").unwrap();
        theta[k] = 50.0;
        for c in ["housing_cost_owner", "housing_cost_renter", "travel_cost", "congestion"] {
            theta[spec.coefficient_index(c).unwrap()] = -40.0;
        }
        let task = &sk.tasks[0];
        let counts = simulate_choice_counts(&spec, &theta, &sk.respondents[0], task, 10_000, 2).unwrap();
        let pt: usize = task
            .alternatives
            .iter()
            .zip(&counts)
            .filter(|(a, _)| a.mode == crate::dataset::Mode::PublicTransit)
            .map(|(_, c)| c)
            .sum();
        assert!(pt as f64 / 10_000.0 > 0.999, "{counts:?}");
    }
}
