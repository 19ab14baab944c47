//! Pivoted stated-choice design and choice simulation from known parameters.

mod design;
mod population;
mod simulate;
mod truth;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetError;

pub use design::{
    generate_design, orthogonal_array_l27, DesignPlan, DesignSkeleton, DesignStrategy, ProfileLevels,
    HOUSING_COLUMNS, MODE_COLUMNS,
};
pub use population::{generate_population, Marginals, SyntheticRespondent};
pub use simulate::{simulate_choice_counts, simulate_choices};
pub use truth::{reference_estimates, write_simulation, TruthParameters, TruthRecord};

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("status quo must be positive, got {0}")]
    NonPositiveStatusQuo(f64),
    #[error("design needs {needed} columns but the orthogonal array has {available}")]
    TooManyAttributesForArray { needed: usize, available: usize },
    #[error("skeleton does not carry attribute `{attribute}` required by coefficient `{coefficient}`")]
    BindingMismatch { coefficient: String, attribute: String },
    #[error("truth parameter `{0}` is not part of the spec")]
    UnknownTruth(String),
    #[error("truth parameter `{0}` is missing")]
    MissingTruth(String),
    #[error(transparent)]
    Spec(#[from] crate::modelspec::SpecError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Likelihood(#[from] crate::simlik::LikError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// How three design levels are obtained from a respondent's status quo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PivotRule {
    /// `clamp(status_quo, min, max) * factor`.
    Clamped { min: f64, max: f64, factors: [f64; 3] },
    /// `reference * rate`, no clamping.
    PerUnit { rates: [f64; 3] },
}

/// Weekly housing cost, AUD.
pub const HOUSING_COST_PIVOT: PivotRule = PivotRule::Clamped { min: 150.0, max: 6500.0, factors: [0.95, 1.0, 1.05] };
/// One-way commute time, minutes.
pub const TRAVEL_TIME_PIVOT: PivotRule = PivotRule::Clamped { min: 30.0, max: 80.0, factors: [1.05, 1.25, 1.5] };
/// Travel cost in AUD from hypothetical travel time in minutes.
pub const TRAVEL_COST_PIVOT: PivotRule = PivotRule::PerUnit { rates: [0.100, 0.125, 0.150] };

pub const ROOM_LEVELS: [f64; 3] = [0.0, 1.0, 2.0];
pub const WALK_LEVELS: [f64; 3] = [10.0, 20.0, 30.0];
pub const CONGESTION_LEVELS: [f64; 3] = [0.10, 0.35, 0.65];
pub const DWELLING_LEVELS: [&str; 3] = ["unit", "townhouse", "separate"];
pub const NEIGHBOURHOOD_LEVELS: [&str; 3] = ["single-family", "mixed low-rise", "high-rise"];
pub const SERVICE_LEVELS: [&str; 3] = ["none", "basic", "basic+specialty"];
pub const DEVELOPMENT_AGE_LEVELS: [&str; 3] = ["0-5", "5-15", ">15"];

pub fn pivot_levels(rule: PivotRule, status_quo: f64) -> Result<[f64; 3], DesignError> {
    if !(status_quo > 0.0) {
        return Err(DesignError::NonPositiveStatusQuo(status_quo));
    }
    Ok(match rule {
        PivotRule::Clamped { min, max, factors } => {
            let reference = status_quo.clamp(min, max);
            factors.map(|f| reference * f)
        }
        PivotRule::PerUnit { rates } => rates.map(|r| status_quo * r),
    })
}

/// Independent generator for one respondent within one purpose; the same
/// `(seed, domain, index)` always gives the same stream.
pub(crate) fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: [f64; 3], b: [f64; 3]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn clamp_examples() {
        assert!(close(pivot_levels(HOUSING_COST_PIVOT, 100.0).unwrap(), [142.5, 150.0, 157.5]));
        assert!(close(pivot_levels(TRAVEL_TIME_PIVOT, 20.0).unwrap(), [31.5, 37.5, 45.0]));
        assert!(close(pivot_levels(TRAVEL_COST_PIVOT, 40.0).unwrap(), [4.0, 5.0, 6.0]));
        assert!(close(pivot_levels(HOUSING_COST_PIVOT, 9000.0).unwrap(), [6175.0, 6500.0, 6825.0]));
    }

    #[test]
    fn non_positive_status_quo() {
        assert!(matches!(pivot_levels(TRAVEL_TIME_PIVOT, 0.0), Err(DesignError::NonPositiveStatusQuo(_))));
        assert!(matches!(pivot_levels(HOUSING_COST_PIVOT, -3.0), Err(DesignError::NonPositiveStatusQuo(_))));
        assert!(pivot_levels(HOUSING_COST_PIVOT, f64::NAN).is_err());
    }

    #[test]
    fn monotone_inside_and_flat_outside_the_clamp() {
        let at = |x| pivot_levels(TRAVEL_TIME_PIVOT, x).unwrap();
        assert_eq!(at(5.0), at(29.0));
        assert_eq!(at(81.0), at(200.0));
        assert!(at(31.0)[0] < at(32.0)[0]);
        for x in [1.0, 30.0, 55.0, 90.0] {
            let l = at(x);
            assert!(l[0] < l[1] && l[1] < l[2]);
        }
    }
}
