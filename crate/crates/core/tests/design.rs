//! Designs and simulated choices checked against closed forms.

mod common;

use mixlogit_core::dataset::{load_choice_data, ColumnSchema};
use mixlogit_core::designsim::{
    generate_design, generate_population, simulate_choice_counts, simulate_choices, write_simulation, DesignPlan,
    DesignStrategy, Marginals, TruthParameters, TruthRecord,
};
use mixlogit_core::modelspec::bundled_spec;

#[test]
fn cmnl_choice_shares_match_logit_probabilities() {
    let spec = bundled_spec("paper_cmnl").unwrap();
    let theta = TruthParameters::reference(&spec).unwrap().theta_for(&spec).unwrap();
    let pop = generate_population(6, 3, &Marginals::default());
    let skeleton = generate_design(&DesignPlan::default(), &pop, 3).unwrap();
    for (k, task) in skeleton.tasks.iter().step_by(9).take(4).enumerate() {
        let resp = skeleton.respondents.iter().find(|r| r.id == task.respondent_id).unwrap();
        let reps = 200_000;
        let counts = simulate_choice_counts(&spec, &theta, resp, task, reps, k as u64).unwrap();
        let probs = common::softmax(&common::fixed_utilities(&spec, &theta, resp, task));
        for (c, p) in counts.iter().zip(&probs) {
            let share = *c as f64 / reps as f64;
            // Five binomial standard errors at most 0.0056.
            assert!((share - p).abs() < 5.0 * (p * (1.0 - p) / reps as f64).sqrt() + 1e-12, "{share} vs {p}");
        }
    }
}

#[test]
fn simulation_round_trips_through_csv() {
    let spec = bundled_spec("paper_mmnl2").unwrap();
    let truth = TruthParameters::reference(&spec).unwrap();
    let plan = DesignPlan { strategy: DesignStrategy::RandomBalanced, tasks_per_respondent: 4 };
    let pop = generate_population(30, 9, &Marginals::default());
    let data = simulate_choices(&generate_design(&plan, &pop, 9).unwrap(), &spec, &truth, 10).unwrap();
    let dir = std::env::temp_dir().join(format!("mixlogit-design-{}", std::process::id()));
    let record = TruthRecord {
        spec: spec.name.clone(),
        class: spec.class,
        seed: 9,
        design: plan,
        n_respondents: 30,
        truth: truth.clone(),
    };
    let (csv, json) = write_simulation(&dir, &data, &record).unwrap();
    let back = load_choice_data(&csv, &ColumnSchema::default()).unwrap();
    assert_eq!(back.respondents, data.respondents);
    assert_eq!(back.tasks, data.tasks);
    let parsed: TruthRecord = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(parsed, record);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn same_seed_same_choices() {
    let spec = bundled_spec("paper_ecmnl").unwrap();
    let theta = TruthParameters::reference(&spec).unwrap().theta_for(&spec).unwrap();
    let a = common::simulated(&spec, &theta, 50, 4);
    let b = common::simulated(&spec, &theta, 50, 4);
    let c = common::simulated(&spec, &theta, 50, 5);
    assert_eq!(a.tasks, b.tasks);
    assert_ne!(a.tasks, c.tasks);
}
