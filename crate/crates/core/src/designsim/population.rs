//! Synthetic respondents drawn independently from sample marginals.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::stream;
use crate::dataset::{encode_income, income_band_table, AgeBand, IncomeBand, Respondent};

const DOMAIN: u64 = 1;

/// Shares and status-quo ranges; characteristics are drawn independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    /// 18-29, 30-49, 50+.
    pub age: [f64; 3],
    pub female: f64,
    /// Reporting groups 0-799, 800-1,599, 1,600-2,499, 2,500+ AUD/week;
    /// the band within a group is uniform.
    pub income_groups: [f64; 4],
    pub degree: f64,
    pub children: f64,
    pub license: f64,
    pub ridehail: f64,
    pub owner: f64,
    /// Equal-probability weekly housing cost ranges, AUD.
    pub housing_cost_ranges: [(f64, f64); 4],
    /// Equal-probability one-way commute ranges, minutes.
    pub commute_ranges: [(f64, f64); 4],
}

impl Default for Marginals {
    fn default() -> Self {
        Marginals {
            age: [0.172, 0.533, 0.283],
            female: 0.471,
            income_groups: [0.149, 0.288, 0.312, 0.252],
            degree: 0.566,
            children: 0.338,
            license: 0.914,
            ridehail: 0.584,
            owner: 0.551,
            housing_cost_ranges: [(100.0, 300.0), (300.0, 430.0), (430.0, 600.0), (600.0, 1000.0)],
            commute_ranges: [(5.0, 20.0), (20.0, 30.0), (30.0, 50.0), (50.0, 150.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRespondent {
    pub respondent: Respondent,
    /// Weekly housing cost, AUD.
    pub housing_cost: f64,
    /// One-way commute, minutes.
    pub commute_minutes: f64,
}

fn categorical<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn group_bands(group: usize) -> Vec<u8> {
    let (lo, hi) = [(0.0, 800.0), (800.0, 1600.0), (1600.0, 2500.0), (2500.0, f64::INFINITY)][group];
    income_band_table()
        .iter()
        .enumerate()
        .filter(|(_, b)| {
            let lower = match b {
                IncomeBand::Bounded { lower, .. } | IncomeBand::Open { lower } => *lower,
            };
            lower >= lo && lower < hi
        })
        .map(|(i, _)| i as u8 + 1)
        .collect()
}

pub fn generate_population(n: usize, seed: u64, marginals: &Marginals) -> Vec<SyntheticRespondent> {
    let bands: Vec<Vec<u8>> = (0..4).map(group_bands).collect();
    (0..n)
        .map(|i| {
            let mut rng = stream(seed, DOMAIN, i as u64);
            let age_band = [AgeBand::From18To29, AgeBand::From30To49, AgeBand::From50][categorical(&mut rng, &marginals.age)];
            let female = rng.random_bool(marginals.female);
            let group = &bands[categorical(&mut rng, &marginals.income_groups)];
            let income_band = group[rng.random_range(0..group.len())];
            let degree_holder = rng.random_bool(marginals.degree);
            let children_present = rng.random_bool(marginals.children);
            let has_license = rng.random_bool(marginals.license);
            let ridehail_user = rng.random_bool(marginals.ridehail);
            let is_owner = rng.random_bool(marginals.owner);
            let (lo, hi) = marginals.housing_cost_ranges[rng.random_range(0..4)];
            let housing_cost = rng.random_range(lo..hi);
            let (lo, hi) = marginals.commute_ranges[rng.random_range(0..4)];
            let commute_minutes = rng.random_range(lo..hi);
            SyntheticRespondent {
                respondent: Respondent {
                    id: format!("r{:05}", i + 1),
                    income_band,
                    weekly_household_income: encode_income(income_band).expect("band from table"),
                    is_owner,
                    has_license,
                    female,
                    age_band,
                    children_present,
                    degree_holder,
                    ridehail_user,
                },
                housing_cost,
                commute_minutes,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_seed_dependent() {
        let m = Marginals::default();
        let a = generate_population(50, 3, &m);
        assert_eq!(a, generate_population(50, 3, &m));
        assert_ne!(a, generate_population(50, 4, &m));
        // Respondent i does not depend on how many are generated.
        assert_eq!(a[..10], generate_population(10, 3, &m)[..]);
    }

    #[test]
    fn marginals_are_reproduced() {
        let m = Marginals::default();
        let pop = generate_population(20_000, 11, &m);
        let share = |f: &dyn Fn(&SyntheticRespondent) -> bool| pop.iter().filter(|r| f(r)).count() as f64 / 20_000.0;
        // Binomial sd at n = 20000 is at most 0.0036.
        assert!((share(&|r| r.respondent.has_license) - 0.914).abs() < 0.015);
        assert!((share(&|r| r.respondent.is_owner) - 0.551).abs() < 0.015);
        assert!((share(&|r| r.respondent.age_band == AgeBand::From50) - 0.283).abs() < 0.015);
        assert!((share(&|r| r.respondent.weekly_household_income < 800.0) - 0.149).abs() < 0.015);
        assert!((share(&|r| r.respondent.weekly_household_income >= 2500.0) - 0.252).abs() < 0.015);
        assert!((share(&|r| r.housing_cost < 300.0) - 0.25).abs() < 0.015);
        assert!(pop.iter().all(|r| r.housing_cost > 0.0 && r.commute_minutes > 0.0));
    }

    #[test]
    fn reporting_groups_cover_all_bands() {
        let all: Vec<u8> = (0..4).flat_map(group_bands).collect();
        assert_eq!(all, (1..=12).collect::<Vec<u8>>());
    }
}
