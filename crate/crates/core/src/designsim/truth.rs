//! Known parameter vectors used to simulate data.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DesignError, DesignPlan};
use crate::dataset::{write_choice_data, ChoiceDataset};
use crate::modelspec::{ModelClass, ModelSpec};

/// A parameter vector keyed by parameter name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthParameters {
    pub values: BTreeMap<String, f64>,
}

impl TruthParameters {
    pub fn from_theta(spec: &ModelSpec, theta: &[f64]) -> Self {
        TruthParameters { values: spec.parameter_names().into_iter().zip(theta.iter().copied()).collect() }
    }

    /// Published estimates for `spec`'s class.
    pub fn reference(spec: &ModelSpec) -> Result<Self, DesignError> {
        let t = TruthParameters { values: reference_estimates(spec.class).into_iter().collect() };
        t.theta_for(spec)?;
        Ok(t)
    }

    /// Values in `spec`'s parameter order; every name must match.
    pub fn theta_for(&self, spec: &ModelSpec) -> Result<Vec<f64>, DesignError> {
        let names = spec.parameter_names();
        if let Some(extra) = self.values.keys().find(|k| !names.contains(k)) {
            return Err(DesignError::UnknownTruth(extra.clone()));
        }
        names
            .iter()
            .map(|n| self.values.get(n).copied().ok_or_else(|| DesignError::MissingTruth(n.clone())))
            .collect()
    }
}

const COMMON: [(&str, [f64; 4]); 27] = [
    ("housing_cost_owner", [-0.6027, -0.5553, -0.4104, -0.3306]),
    ("housing_cost_renter", [-0.0937, -0.0728, -0.0027, 0.0190]),
    ("rooms", [0.1532, 0.1571, 0.1775, 0.1924]),
    ("separate_house", [0.5380, 0.5509, 0.6322, 0.6885]),
    ("single_family", [0.1421, 0.1313, 0.1508, 0.1452]),
    ("development_age_15plus", [-0.3639, -0.3765, -0.4147, -0.4388]),
    ("local_services", [0.4375, 0.4324, 0.5049, 0.5173]),
    ("walk_10min", [0.2358, 0.2467, 0.2530, 0.2652]),
    ("travel_cost", [-2.3581, -2.1346, -1.9947, -1.9562]),
    ("time_car", [-1.8044, -2.0752, -3.4863, -3.5725]),
    ("time_sdc", [-1.4537, -2.2457, -3.8282, -3.3968]),
    ("time_pt", [-1.2173, -1.1489, -2.5314, -2.6900]),
    ("congestion", [-0.5124, -0.6951, -0.8170, -0.6971]),
    ("asc.sdc.baseline", [-1.4494, -1.8420, -1.5286, -2.3277]),
    ("asc.sdc.female", [0.1248, 0.2470, 0.4404, 0.1874]),
    ("asc.sdc.age_18_29", [0.1611, 0.1396, -0.3850, -0.0293]),
    ("asc.sdc.age_50_plus", [-0.4463, -0.7953, -1.0492, -0.8021]),
    ("asc.sdc.children", [0.2015, 0.4369, 0.2960, 0.6163]),
    ("asc.sdc.degree", [0.6821, 1.2073, 1.3596, 1.3967]),
    ("asc.sdc.ridehail", [0.7549, 1.4067, 1.3254, 1.6003]),
    ("asc.pt.baseline", [-1.2694, -2.1577, -1.7254, -2.6863]),
    ("asc.pt.female", [0.2120, 0.4465, 0.1105, 0.3471]),
    ("asc.pt.age_18_29", [-0.2298, -0.4000, -0.6607, -0.3639]),
    ("asc.pt.age_50_plus", [-0.2102, -0.4670, -0.8040, -0.3207]),
    ("asc.pt.children", [-0.3766, -0.7289, -0.7796, -0.5035]),
    ("asc.pt.degree", [0.7590, 1.6376, 1.6405, 1.6714]),
    ("asc.pt.ridehail", [0.4708, 1.0211, 0.8472, 1.3190]),
];

/// Error-component scales for EC-MNL, M-MNL I, M-MNL II.
const TAU: [(&str, [f64; 3]); 3] =
    [("tau.car", [2.6001, 2.2939, 2.7307]), ("tau.sdc", [1.5594, 0.5127, 1.2486]), ("tau.pt", [2.2602, 0.7268, 1.5546])];

const MMNL1_SD: [(&str, f64); 6] = [
    ("rooms.sd", 0.3790),
    ("separate_house.sd", 0.9124),
    ("time_car.sd", 2.6849),
    ("time_sdc.sd", 2.4614),
    ("time_pt.sd", 3.0862),
    ("congestion.sd", 1.1555),
];

const MMNL2_SD: [(&str, f64); 3] = [("rooms.sd", 0.4353), ("separate_house.sd", 0.9829), ("congestion.sd", 1.0206)];

/// Cholesky factor of the travel-time tastes, published per quarter hour.
const MMNL2_CHOL_QUARTER_HOUR: [(&str, f64); 6] = [
    ("chol.time[time_car,time_car]", 1.3038),
    ("chol.time[time_sdc,time_car]", 1.1209),
    ("chol.time[time_sdc,time_sdc]", 0.2105),
    ("chol.time[time_pt,time_car]", 1.0202),
    ("chol.time[time_pt,time_sdc]", -0.1358),
    ("chol.time[time_pt,time_pt]", 0.5356),
];

/// Published estimates for the bundled spec of `class`, in the parameter
/// coordinates of this crate. Travel time is measured in hours, so the
/// quarter-hour Cholesky entries are multiplied by four.
pub fn reference_estimates(class: ModelClass) -> Vec<(String, f64)> {
    let col = class as usize;
    let mut out: Vec<(String, f64)> = COMMON.iter().map(|(n, v)| (n.to_string(), v[col])).collect();
    match class {
        ModelClass::Cmnl | ModelClass::Ecmnl => {}
        ModelClass::Mmnl1 => out.extend(MMNL1_SD.iter().map(|(n, v)| (n.to_string(), *v))),
        ModelClass::Mmnl2 => {
            out.extend(MMNL2_SD.iter().map(|(n, v)| (n.to_string(), *v)));
            out.extend(MMNL2_CHOL_QUARTER_HOUR.iter().map(|(n, v)| (n.to_string(), 4.0 * v)));
        }
    }
    if class != ModelClass::Cmnl {
        out.extend(TAU.iter().map(|(n, v)| (n.to_string(), v[col - 1])));
    }
    out
}

/// Contents of `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub spec: String,
    pub class: ModelClass,
    pub seed: u64,
    pub design: DesignPlan,
    pub n_respondents: usize,
    pub truth: TruthParameters,
}

/// Writes `choices.csv` and `truth.json` into `dir`.
pub fn write_simulation(
    dir: &Path,
    data: &ChoiceDataset,
    record: &TruthRecord,
) -> Result<(PathBuf, PathBuf), DesignError> {
    std::fs::create_dir_all(dir)?;
    let csv = dir.join("choices.csv");
    write_choice_data(data, &csv)?;
    let json = dir.join("truth.json");
    serde_json::to_writer_pretty(BufWriter::new(File::create(&json)?), record)?;
    Ok((csv, json))
}
