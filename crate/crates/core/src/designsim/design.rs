//! Choice-task construction.
//!
//! Orthogonal strategy: a 27-run, 13-column three-level array whose columns
//! are the 13 points of the projective plane over GF(3) (first non-zero
//! coordinate 1, lexicographic order) and whose runs are the 27 vectors `x`
//! of GF(3)^3; entry = `v . x mod 3`. Housing profiles read columns 0..7 in
//! [`HOUSING_COLUMNS`] order and mode attributes read columns 0..8 in
//! [`MODE_COLUMNS`] order, each from its own stream of seeded run
//! permutations. Profile `i` of respondent `n` (two per task) takes
//! position `2 * T * n + i` of the stream, so every complete cycle of 27
//! profiles is one full copy of the array.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{
    pivot_levels, stream, DesignError, SyntheticRespondent, CONGESTION_LEVELS, HOUSING_COST_PIVOT, ROOM_LEVELS,
    TRAVEL_COST_PIVOT, TRAVEL_TIME_PIVOT, WALK_LEVELS,
};
use crate::dataset::{build_alternative_universe, Alternative, ChoiceTask, Mode, Respondent};

const DOMAIN_HOUSING: u64 = 2;
const DOMAIN_MODE: u64 = 3;
const DOMAIN_RANDOM: u64 = 4;
const OA_RUNS: usize = 27;
const OA_COLUMNS: usize = 13;

pub const HOUSING_COLUMNS: [&str; 7] =
    ["cost", "rooms", "dwelling", "neighbourhood", "development_age", "services", "walk"];
pub const MODE_COLUMNS: [&str; 8] =
    ["time_car", "time_sdc", "time_pt", "cost_car", "cost_sdc", "cost_pt", "congestion_car", "congestion_sdc"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignStrategy {
    OrthogonalMainEffects,
    RandomBalanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignPlan {
    pub strategy: DesignStrategy,
    pub tasks_per_respondent: usize,
}

impl Default for DesignPlan {
    fn default() -> Self {
        DesignPlan { strategy: DesignStrategy::OrthogonalMainEffects, tasks_per_respondent: 8 }
    }
}

/// Level indices (0..3) behind one housing profile and its mode attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileLevels {
    pub respondent: usize,
    pub task: u32,
    pub housing_option: u8,
    pub housing: [u8; 7],
    pub mode: [u8; 8],
}

/// Tasks without choices. `tasks[i].chosen` is a placeholder.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSkeleton {
    pub plan: DesignPlan,
    pub seed: u64,
    pub respondents: Vec<Respondent>,
    pub tasks: Vec<ChoiceTask>,
    pub profiles: Vec<ProfileLevels>,
}

/// Rows are runs, columns are the 13 factors.
pub fn orthogonal_array_l27() -> [[u8; OA_COLUMNS]; OA_RUNS] {
    let mut points = Vec::with_capacity(OA_COLUMNS);
    for a in 0..3u8 {
        for b in 0..3u8 {
            for c in 0..3u8 {
                let first = [a, b, c].into_iter().find(|&x| x != 0);
                if first == Some(1) {
                    points.push([a, b, c]);
                }
            }
        }
    }
    let mut out = [[0u8; OA_COLUMNS]; OA_RUNS];
    for (run, row) in out.iter_mut().enumerate() {
        let x = [(run / 9) as u8, (run / 3 % 3) as u8, (run % 3) as u8];
        for (col, v) in points.iter().enumerate() {
            row[col] = (v[0] * x[0] + v[1] * x[1] + v[2] * x[2]) % 3;
        }
    }
    out
}

struct RunStream {
    seed: u64,
    domain: u64,
    cache: BTreeMap<usize, Vec<usize>>,
}

impl RunStream {
    fn run_at(&mut self, position: usize) -> usize {
        let cycle = position / OA_RUNS;
        let (seed, domain) = (self.seed, self.domain);
        let perm = self.cache.entry(cycle).or_insert_with(|| {
            let mut p: Vec<usize> = (0..OA_RUNS).collect();
            p.shuffle(&mut stream(seed, domain, cycle as u64));
            p
        });
        perm[position % OA_RUNS]
    }
}

fn balanced_column(len: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<u8> {
    let mut v: Vec<u8> = (0..len).map(|i| (i % 3) as u8).collect();
    v.shuffle(rng);
    v
}

pub fn generate_design(
    plan: &DesignPlan,
    population: &[SyntheticRespondent],
    seed: u64,
) -> Result<DesignSkeleton, DesignError> {
    let needed = HOUSING_COLUMNS.len().max(MODE_COLUMNS.len());
    if plan.strategy == DesignStrategy::OrthogonalMainEffects && needed > OA_COLUMNS {
        return Err(DesignError::TooManyAttributesForArray { needed, available: OA_COLUMNS });
    }
    let oa = orthogonal_array_l27();
    let mut housing_runs = RunStream { seed, domain: DOMAIN_HOUSING, cache: BTreeMap::new() };
    let mut mode_runs = RunStream { seed, domain: DOMAIN_MODE, cache: BTreeMap::new() };
    let per_resp = 2 * plan.tasks_per_respondent;

    let mut skeleton = DesignSkeleton {
        plan: *plan,
        seed,
        respondents: Vec::with_capacity(population.len()),
        tasks: Vec::with_capacity(population.len() * plan.tasks_per_respondent),
        profiles: Vec::with_capacity(population.len() * per_resp),
    };
    for (n, person) in population.iter().enumerate() {
        let cost_levels = pivot_levels(HOUSING_COST_PIVOT, person.housing_cost)?;
        let time_levels = pivot_levels(TRAVEL_TIME_PIVOT, person.commute_minutes)?;
        let universe = build_alternative_universe(&person.respondent);

        let random_levels = (plan.strategy == DesignStrategy::RandomBalanced).then(|| {
            let mut rng = stream(seed, DOMAIN_RANDOM, n as u64);
            let h: Vec<Vec<u8>> = (0..HOUSING_COLUMNS.len()).map(|_| balanced_column(per_resp, &mut rng)).collect();
            let m: Vec<Vec<u8>> = (0..MODE_COLUMNS.len()).map(|_| balanced_column(per_resp, &mut rng)).collect();
            (h, m)
        });

        for t in 0..plan.tasks_per_respondent {
            let mut alternatives = Vec::with_capacity(universe.len());
            let mut task_profiles = Vec::with_capacity(2);
            for k in 0..2usize {
                let i = 2 * t + k;
                let (housing, mode) = match &random_levels {
                    None => {
                        let hr = housing_runs.run_at(n * per_resp + i);
                        let mr = mode_runs.run_at(n * per_resp + i);
                        (
                            std::array::from_fn(|c| oa[hr][c]),
                            std::array::from_fn(|c| oa[mr][c]),
                        )
                    }
                    Some((h, m)) => (std::array::from_fn(|c| h[c][i]), std::array::from_fn(|c| m[c][i])),
                };
                task_profiles.push(ProfileLevels {
                    respondent: n,
                    task: t as u32 + 1,
                    housing_option: k as u8 + 1,
                    housing,
                    mode,
                });
            }
            for &(k, mode) in &universe {
                let p = &task_profiles[k as usize - 1];
                alternatives.push(alternative(p, k, mode, &cost_levels, &time_levels));
            }
            skeleton.profiles.extend(task_profiles);
            skeleton.tasks.push(ChoiceTask {
                respondent_id: person.respondent.id.clone(),
                task_index: t as u32 + 1,
                alternatives,
                chosen: 0,
            });
        }
        skeleton.respondents.push(person.respondent.clone());
    }
    Ok(skeleton)
}

fn alternative(p: &ProfileLevels, k: u8, mode: Mode, cost_levels: &[f64; 3], time_levels: &[f64; 3]) -> Alternative {
    let h = p.housing;
    let mut housing_attrs = BTreeMap::new();
    housing_attrs.insert("h_cost".to_string(), cost_levels[h[0] as usize]);
    housing_attrs.insert("h_rooms".to_string(), ROOM_LEVELS[h[1] as usize]);
    housing_attrs.insert("h_separate".to_string(), (h[2] == 2) as u8 as f64);
    housing_attrs.insert("h_single_family".to_string(), (h[3] == 0) as u8 as f64);
    housing_attrs.insert("h_age15".to_string(), (h[4] == 2) as u8 as f64);
    let services = h[5] != 0;
    housing_attrs.insert("h_services".to_string(), services as u8 as f64);
    if services {
        housing_attrs.insert("h_walk".to_string(), WALK_LEVELS[h[6] as usize]);
    }
    housing_attrs.insert("h_walk10".to_string(), (services && h[6] == 0) as u8 as f64);

    let slot = mode.slot();
    let minutes = time_levels[p.mode[slot] as usize];
    let cost = pivot_levels(TRAVEL_COST_PIVOT, minutes).expect("positive travel time")[p.mode[3 + slot] as usize];
    let mut mode_attrs = BTreeMap::new();
    mode_attrs.insert("m_time".to_string(), minutes / 60.0);
    mode_attrs.insert("m_cost".to_string(), cost);
    if mode.is_car() {
        mode_attrs.insert("m_congestion".to_string(), CONGESTION_LEVELS[p.mode[6 + slot] as usize]);
    }
    Alternative { housing: k, mode, housing_attrs, mode_attrs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designsim::{generate_population, Marginals};

    #[test]
    fn l27_is_an_orthogonal_array_of_strength_two() {
        let oa = orthogonal_array_l27();
        for a in 0..OA_COLUMNS {
            let mut counts = [0; 3];
            for row in &oa {
                counts[row[a] as usize] += 1;
            }
            assert_eq!(counts, [9; 3]);
            for b in a + 1..OA_COLUMNS {
                let mut pairs = [[0; 3]; 3];
                for row in &oa {
                    pairs[row[a] as usize][row[b] as usize] += 1;
                }
                assert_eq!(pairs, [[3; 3]; 3], "columns {a} and {b}");
            }
        }
    }

    fn skeleton(n: usize, strategy: DesignStrategy, seed: u64) -> DesignSkeleton {
        let pop = generate_population(n, seed, &Marginals::default());
        generate_design(&DesignPlan { strategy, tasks_per_respondent: 8 }, &pop, seed).unwrap()
    }

    #[test]
    fn orthogonal_levels_balance_over_complete_cycles() {
        // 27 respondents x 16 profiles = 16 complete copies of the array.
        let s = skeleton(27, DesignStrategy::OrthogonalMainEffects, 5);
        assert_eq!(s.profiles.len(), 27 * 16);
        for c in 0..7 {
            let mut counts = [0; 3];
            s.profiles.iter().for_each(|p| counts[p.housing[c] as usize] += 1);
            assert_eq!(counts, [144; 3], "housing column {}", HOUSING_COLUMNS[c]);
        }
        for c in 0..8 {
            let mut counts = [0; 3];
            s.profiles.iter().for_each(|p| counts[p.mode[c] as usize] += 1);
            assert_eq!(counts, [144; 3], "mode column {}", MODE_COLUMNS[c]);
        }
    }

    #[test]
    fn random_balanced_is_balanced_per_respondent() {
        let s = skeleton(10, DesignStrategy::RandomBalanced, 8);
        for n in 0..10 {
            for c in 0..7 {
                let mut counts = [0; 3];
                s.profiles.iter().filter(|p| p.respondent == n).for_each(|p| counts[p.housing[c] as usize] += 1);
                assert!(counts.iter().all(|&k| k == 5 || k == 6), "{counts:?}");
            }
        }
    }

    #[test]
    fn unlicensed_respondents_see_no_conventional_car() {
        let s = skeleton(200, DesignStrategy::OrthogonalMainEffects, 1);
        for (resp, tasks) in s.respondents.iter().zip(s.tasks.chunks(8)) {
            for t in tasks {
                assert_eq!(t.alternatives.len(), if resp.has_license { 6 } else { 4 });
                assert_eq!(t.alternatives.iter().any(|a| a.mode == Mode::ConventionalCar), resp.has_license);
            }
        }
        assert!(s.respondents.iter().any(|r| !r.has_license));
    }

    #[test]
    fn attribute_structure() {
        let s = skeleton(30, DesignStrategy::OrthogonalMainEffects, 2);
        for t in &s.tasks {
            for a in &t.alternatives {
                assert_eq!(a.mode_attrs.contains_key("m_congestion"), a.mode != Mode::PublicTransit);
                assert_eq!(a.housing_attrs.contains_key("h_walk"), a.housing_attrs["h_services"] == 1.0);
                let per_minute = a.mode_attrs["m_cost"] / (a.mode_attrs["m_time"] * 60.0);
                assert!([0.1, 0.125, 0.15].iter().any(|r| (r - per_minute).abs() < 1e-12));
            }
            // Alternatives sharing a housing option share its attributes.
            let h1: Vec<_> = t.alternatives.iter().filter(|a| a.housing == 1).map(|a| &a.housing_attrs).collect();
            assert!(h1.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let a = skeleton(20, DesignStrategy::OrthogonalMainEffects, 9);
        assert_eq!(a, skeleton(20, DesignStrategy::OrthogonalMainEffects, 9));
        assert_ne!(a.profiles, skeleton(20, DesignStrategy::OrthogonalMainEffects, 10).profiles);
    }
}
