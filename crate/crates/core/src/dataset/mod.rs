//! Panel choice data: respondents, choice tasks and the alternative universe of
//! (housing option, commute mode) tuples.
//!
//! The canonical on-disk representation is a long CSV with one row per
//! alternative; see [`io`] for the column layout.

mod income;
pub mod io;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use income::{encode_income, income_band_table, IncomeBand, TOP_CODE_FACTOR};
pub use io::{load_choice_data, write_choice_data, ColumnSchema};

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("missing column `{column}` (row {row})")]
    MissingColumn { column: String, row: usize },
    #[error("row {row}: respondent `{respondent}` has no respondent-level record")]
    DanglingRespondent { respondent: String, row: usize },
    #[error("row {row}: respondent `{respondent}` task {task} breaks the contiguous 1..T task order")]
    NonContiguousTask { respondent: String, task: u32, row: usize },
    #[error("row {row}: chosen alternative is not available")]
    ChosenUnavailable { row: usize },
    #[error("row {row}: task must have exactly one chosen alternative, found {count}")]
    ChosenCount { row: usize, count: usize },
    #[error("row {row}: respondent `{respondent}` changes availability between tasks")]
    InconsistentAvailability { respondent: String, row: usize },
    #[error("row {row}: respondent `{respondent}` has conflicting respondent-level values")]
    InconsistentRespondent { respondent: String, row: usize },
    #[error("row {row}: conventional car available to a respondent without a licence")]
    UnlicensedCarAvailable { row: usize },
    #[error("row {row}: invalid value `{value}` in column `{column}`")]
    InvalidValue { column: String, value: String, row: usize },
    #[error("unknown income band `{0}`")]
    UnknownBand(String),
    #[error("dataset has no respondents")]
    Empty,
    #[error("csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(String),
}

/// Commute mode of an alternative tuple. Conventional car is the reference
/// mode for intercepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Mode {
    ConventionalCar = 1,
    SelfDrivingCar = 2,
    PublicTransit = 3,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::ConventionalCar, Mode::SelfDrivingCar, Mode::PublicTransit];

    pub fn index(self) -> u8 {
        self as u8
    }

    /// Zero-based slot, handy for per-mode arrays.
    pub fn slot(self) -> usize {
        self as usize - 1
    }

    pub fn from_index(l: u8) -> Option<Mode> {
        match l {
            1 => Some(Mode::ConventionalCar),
            2 => Some(Mode::SelfDrivingCar),
            3 => Some(Mode::PublicTransit),
            _ => None,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Mode::ConventionalCar => "car",
            Mode::SelfDrivingCar => "sdc",
            Mode::PublicTransit => "pt",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::ConventionalCar => "Conventional car",
            Mode::SelfDrivingCar => "Self-driving car",
            Mode::PublicTransit => "Public transit",
        }
    }

    /// Car modes carry the congestion attribute.
    pub fn is_car(self) -> bool {
        matches!(self, Mode::ConventionalCar | Mode::SelfDrivingCar)
    }
}

impl TryFrom<u8> for Mode {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Mode::from_index(v).ok_or_else(|| format!("mode index must be 1, 2 or 3, got {v}"))
    }
}

impl From<Mode> for u8 {
    fn from(m: Mode) -> u8 {
        m.index()
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgeBand {
    #[serde(rename = "18-29")]
    From18To29,
    #[serde(rename = "30-49")]
    From30To49,
    #[serde(rename = "50+")]
    From50,
}

impl AgeBand {
    pub fn as_str(self) -> &'static str {
        match self {
            AgeBand::From18To29 => "18-29",
            AgeBand::From30To49 => "30-49",
            AgeBand::From50 => "50+",
        }
    }

    pub fn parse(s: &str) -> Option<AgeBand> {
        match s.trim() {
            "18-29" => Some(AgeBand::From18To29),
            "30-49" => Some(AgeBand::From30To49),
            "50+" => Some(AgeBand::From50),
            _ => None,
        }
    }
}

/// Respondent-level covariates that may multiply an attribute or shift a
/// mode intercept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    /// `10 / weekly household income`; turns a weekly cost into cost over
    /// income times ten.
    InvIncome10,
    Owner,
    Renter,
    Female,
    #[serde(rename = "age_18_29")]
    Age18To29,
    #[serde(rename = "age_50_plus")]
    Age50Plus,
    Children,
    Degree,
    Ridehail,
}

impl Covariate {
    pub const ALL: [Covariate; 9] = [
        Covariate::InvIncome10,
        Covariate::Owner,
        Covariate::Renter,
        Covariate::Female,
        Covariate::Age18To29,
        Covariate::Age50Plus,
        Covariate::Children,
        Covariate::Degree,
        Covariate::Ridehail,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Covariate::InvIncome10 => "inv_income10",
            Covariate::Owner => "owner",
            Covariate::Renter => "renter",
            Covariate::Female => "female",
            Covariate::Age18To29 => "age_18_29",
            Covariate::Age50Plus => "age_50_plus",
            Covariate::Children => "children",
            Covariate::Degree => "degree",
            Covariate::Ridehail => "ridehail",
        }
    }

    pub fn parse(s: &str) -> Option<Covariate> {
        Covariate::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Respondent {
    pub id: String,
    /// One-based index into [`income_band_table`].
    pub income_band: u8,
    /// Encoded band midpoint, AUD/week.
    pub weekly_household_income: f64,
    pub is_owner: bool,
    pub has_license: bool,
    /// Reference-coded: male and "other" are both zero.
    pub female: bool,
    pub age_band: AgeBand,
    pub children_present: bool,
    pub degree_holder: bool,
    pub ridehail_user: bool,
}

impl Respondent {
    pub fn covariate(&self, c: Covariate) -> f64 {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        match c {
            Covariate::InvIncome10 => 10.0 / self.weekly_household_income,
            Covariate::Owner => flag(self.is_owner),
            Covariate::Renter => flag(!self.is_owner),
            Covariate::Female => flag(self.female),
            Covariate::Age18To29 => flag(self.age_band == AgeBand::From18To29),
            Covariate::Age50Plus => flag(self.age_band == AgeBand::From50),
            Covariate::Children => flag(self.children_present),
            Covariate::Degree => flag(self.degree_holder),
            Covariate::Ridehail => flag(self.ridehail_user),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    /// Housing option, 1 or 2.
    pub housing: u8,
    pub mode: Mode,
    pub housing_attrs: BTreeMap<String, f64>,
    pub mode_attrs: BTreeMap<String, f64>,
}

impl Alternative {
    pub fn tuple(&self) -> (u8, Mode) {
        (self.housing, self.mode)
    }

    /// Looks an attribute up by its full column name (`h_...` or `m_...`).
    pub fn attribute(&self, name: &str) -> Option<f64> {
        self.housing_attrs
            .get(name)
            .or_else(|| self.mode_attrs.get(name))
            .copied()
    }
}

/// One choice situation. Only available alternatives are stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceTask {
    pub respondent_id: String,
    pub task_index: u32,
    pub alternatives: Vec<Alternative>,
    /// Index into `alternatives`.
    pub chosen: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceDataset {
    pub respondents: Vec<Respondent>,
    /// Grouped by respondent in `respondents` order, task indices `1..=T_n`.
    pub tasks: Vec<ChoiceTask>,
    pub provenance: String,
}

impl ChoiceDataset {
    /// Validates the panel invariants and returns the dataset.
    pub fn new(
        respondents: Vec<Respondent>,
        tasks: Vec<ChoiceTask>,
        provenance: impl Into<String>,
    ) -> Result<Self, DatasetError> {
        let ds = ChoiceDataset { respondents, tasks, provenance: provenance.into() };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.respondents.is_empty() {
            return Err(DatasetError::Empty);
        }
        let ids: BTreeMap<&str, usize> = self
            .respondents
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.as_str(), i))
            .collect();
        let mut expected_resp = 0usize;
        let mut expected_task = 1u32;
        let mut availability: Option<BTreeSet<(u8, Mode)>> = None;
        for (row, task) in self.tasks.iter().enumerate() {
            let Some(&idx) = ids.get(task.respondent_id.as_str()) else {
                return Err(DatasetError::DanglingRespondent {
                    respondent: task.respondent_id.clone(),
                    row,
                });
            };
            if idx != expected_resp {
                if idx == expected_resp + 1 && expected_task > 1 {
                    expected_resp += 1;
                    expected_task = 1;
                    availability = None;
                } else {
                    return Err(DatasetError::NonContiguousTask {
                        respondent: task.respondent_id.clone(),
                        task: task.task_index,
                        row,
                    });
                }
            }
            if task.task_index != expected_task {
                return Err(DatasetError::NonContiguousTask {
                    respondent: task.respondent_id.clone(),
                    task: task.task_index,
                    row,
                });
            }
            expected_task += 1;
            if task.chosen >= task.alternatives.len() {
                return Err(DatasetError::ChosenUnavailable { row });
            }
            let set: BTreeSet<(u8, Mode)> = task.alternatives.iter().map(Alternative::tuple).collect();
            if !self.respondents[idx].has_license && set.iter().any(|(_, m)| *m == Mode::ConventionalCar) {
                return Err(DatasetError::UnlicensedCarAvailable { row });
            }
            match &availability {
                None => availability = Some(set),
                Some(prev) if *prev != set => {
                    return Err(DatasetError::InconsistentAvailability {
                        respondent: task.respondent_id.clone(),
                        row,
                    })
                }
                _ => {}
            }
        }
        if expected_resp + 1 != self.respondents.len() || expected_task == 1 {
            let r = &self.respondents[(expected_resp + 1).min(self.respondents.len() - 1)];
            return Err(DatasetError::NonContiguousTask {
                respondent: r.id.clone(),
                task: 0,
                row: self.tasks.len(),
            });
        }
        Ok(())
    }

    pub fn n_respondents(&self) -> usize {
        self.respondents.len()
    }

    /// Total number of observed choice tasks (NT).
    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// Task slices per respondent, in respondent order.
    pub fn tasks_by_respondent(&self) -> Vec<&[ChoiceTask]> {
        let mut out = Vec::with_capacity(self.respondents.len());
        let mut start = 0;
        for r in &self.respondents {
            let mut end = start;
            while end < self.tasks.len() && self.tasks[end].respondent_id == r.id {
                end += 1;
            }
            out.push(&self.tasks[start..end]);
            start = end;
        }
        out
    }

    /// Log-likelihood of equal shares over each task's available alternatives.
    pub fn null_log_likelihood(&self) -> f64 {
        self.tasks
            .iter()
            .map(|t| -(t.alternatives.len() as f64).ln())
            .sum()
    }
}

/// The (housing, mode) tuples shown to a respondent, housing-major.
pub fn build_alternative_universe(respondent: &Respondent) -> Vec<(u8, Mode)> {
    let mut out = Vec::with_capacity(6);
    for k in 1..=2u8 {
        for mode in Mode::ALL {
            if mode == Mode::ConventionalCar && !respondent.has_license {
                continue;
            }
            out.push((k, mode));
        }
    }
    out
}
