//! Declarative utility specifications.
//!
//! A [`ModelSpec`] lists which attributes enter utility, with which kind of
//! coefficient (fixed or random), which monotone transform maps the auxiliary
//! normal parameter to the taste, which respondent covariates multiply the
//! attribute, the mode error components, the correlated (Cholesky) blocks and
//! the mode-intercept shifters.
//!
//! Specs are written in TOML:
//!
//! ```toml
//! name = "example"
//! class = "mmnl2"            # cmnl | ecmnl | mmnl1 | mmnl2
//!
//! [[coefficients]]
//! name = "time_car"
//! attribute = "m_time"       # h_* binds housing, m_* binds modes
//! modes = [1]                # m_* only; default all three modes
//! kind = "random"            # fixed | random
//! transform = "identity"     # identity | exponential | negative_exponential
//! interactions = []          # covariates multiplying the attribute
//!
//! [[error_components]]
//! mode = 1
//!
//! [[blocks]]
//! id = "time"
//! members = ["time_car", "time_sdc", "time_pt"]
//!
//! [[intercepts]]
//! mode = 2                   # conventional car (1) is the reference
//! covariates = ["female", "degree"]
//! ```
//!
//! Unknown keys are rejected.

mod mixing;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Covariate, Mode};

pub use mixing::{realize_coefficients, MixingMap, Realization};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("syntax error: {0}")]
    SyntaxError(String),
    #[error("unknown attribute or covariate `{0}`")]
    UnknownAttribute(String),
    #[error("attribute `{attribute}` bound twice in the same context (`{first}`, `{second}`)")]
    DuplicateBinding { attribute: String, first: String, second: String },
    #[error("block `{block}` lists `{member}`, which is not a random coefficient")]
    BlockMemberNotRandom { block: String, member: String },
    #[error("model class {class} does not allow {what}")]
    ClassMismatch { class: ModelClass, what: String },
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown bundled spec `{0}` (bundled: paper_cmnl, paper_ecmnl, paper_mmnl1, paper_mmnl2)")]
    UnknownBundled(String),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Identity,
    Exponential,
    NegativeExponential,
}

impl Transform {
    /// Returns `(psi(alpha), saturated)`. Overflow saturates at the largest
    /// finite magnitude.
    #[inline]
    pub fn apply(self, alpha: f64) -> (f64, bool) {
        match self {
            Transform::Identity => (alpha, false),
            Transform::Exponential => {
                let v = alpha.exp();
                if v.is_finite() {
                    (v, false)
                } else {
                    (f64::MAX, true)
                }
            }
            Transform::NegativeExponential => {
                let v = alpha.exp();
                if v.is_finite() {
                    (-v, false)
                } else {
                    (-f64::MAX, true)
                }
            }
        }
    }

    /// Derivative given the already transformed value.
    #[inline]
    pub fn derivative_from_value(self, beta: f64) -> f64 {
        match self {
            Transform::Identity => 1.0,
            Transform::Exponential | Transform::NegativeExponential => beta,
        }
    }
}

/// `psi(alpha)` without the saturation flag.
pub fn transform_param(transform: Transform, alpha: f64) -> f64 {
    transform.apply(alpha).0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientKind {
    Fixed,
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Binding {
    Housing,
    Modes(BTreeSet<Mode>),
}

impl Binding {
    pub fn applies_to(&self, mode: Mode) -> bool {
        match self {
            Binding::Housing => true,
            Binding::Modes(m) => m.contains(&mode),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientDecl {
    pub name: String,
    pub attribute: String,
    pub binding: Binding,
    pub kind: CoefficientKind,
    pub transform: Transform,
    pub interactions: Vec<Covariate>,
}

impl CoefficientDecl {
    pub fn is_random(&self) -> bool {
        self.kind == CoefficientKind::Random
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErrorComponentDecl {
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrelationBlock {
    pub id: String,
    /// Indices into `ModelSpec::coefficients`, in block order.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterceptDecl {
    pub mode: Mode,
    pub covariates: Vec<Covariate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelClass {
    Cmnl,
    Ecmnl,
    Mmnl1,
    Mmnl2,
}

impl fmt::Display for ModelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelClass::Cmnl => "C-MNL",
            ModelClass::Ecmnl => "EC-MNL",
            ModelClass::Mmnl1 => "M-MNL I",
            ModelClass::Mmnl2 => "M-MNL II",
        })
    }
}

/// Role of one entry of the free parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    /// Fixed coefficient value, or mean of a random coefficient's normal.
    Coefficient(usize),
    /// Standard deviation of a random coefficient outside any block.
    Scale(usize),
    /// Lower-triangular Cholesky entry `(row, col)` of a block.
    Cholesky { block: usize, row: usize, col: usize },
    /// Error-component scale.
    ErrorScale(usize),
    InterceptBaseline(usize),
    /// Covariate shifter `(intercept decl, covariate position)`.
    InterceptShift(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamInfo {
    pub name: String,
    pub role: ParamRole,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub class: ModelClass,
    pub coefficients: Vec<CoefficientDecl>,
    pub error_components: Vec<ErrorComponentDecl>,
    pub blocks: Vec<CorrelationBlock>,
    pub intercepts: Vec<InterceptDecl>,
}

// ---------------------------------------------------------------------------
// Serialized form
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    name: String,
    class: ModelClass,
    #[serde(default)]
    coefficients: Vec<RawCoefficient>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    error_components: Vec<RawErrorComponent>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    blocks: Vec<RawBlock>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    intercepts: Vec<RawIntercept>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoefficient {
    name: String,
    attribute: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    modes: Option<Vec<u8>>,
    kind: CoefficientKind,
    #[serde(default)]
    transform: Transform,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    interactions: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawErrorComponent {
    mode: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBlock {
    id: String,
    members: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntercept {
    mode: u8,
    #[serde(default)]
    covariates: Vec<String>,
}

fn parse_mode(l: u8) -> Result<Mode, SpecError> {
    Mode::from_index(l).ok_or_else(|| SpecError::SyntaxError(format!("mode must be 1, 2 or 3, got {l}")))
}

fn parse_covariate(s: &str) -> Result<Covariate, SpecError> {
    Covariate::parse(s).ok_or_else(|| SpecError::UnknownAttribute(s.to_string()))
}

impl TryFrom<RawSpec> for ModelSpec {
    type Error = SpecError;

    fn try_from(raw: RawSpec) -> Result<Self, SpecError> {
        if raw.coefficients.is_empty() {
            return Err(SpecError::SyntaxError("at least one coefficient is required".into()));
        }
        let mut coefficients = Vec::with_capacity(raw.coefficients.len());
        let mut by_name = BTreeMap::new();
        for (i, c) in raw.coefficients.into_iter().enumerate() {
            if by_name.insert(c.name.clone(), i).is_some() {
                return Err(SpecError::SyntaxError(format!("duplicate coefficient name `{}`", c.name)));
            }
            let binding = if c.attribute.starts_with("h_") && c.attribute.len() > 2 {
                if c.modes.is_some() {
                    return Err(SpecError::SyntaxError(format!(
                        "`modes` given for housing attribute `{}`",
                        c.attribute
                    )));
                }
                Binding::Housing
            } else if c.attribute.starts_with("m_") && c.attribute.len() > 2 {
                let modes = match c.modes {
                    None => Mode::ALL.into_iter().collect(),
                    Some(list) => list.into_iter().map(parse_mode).collect::<Result<BTreeSet<_>, _>>()?,
                };
                if modes.is_empty() {
                    return Err(SpecError::SyntaxError(format!("coefficient `{}` binds no mode", c.name)));
                }
                Binding::Modes(modes)
            } else {
                return Err(SpecError::UnknownAttribute(c.attribute));
            };
            let interactions =
                c.interactions.iter().map(|s| parse_covariate(s)).collect::<Result<Vec<_>, _>>()?;
            coefficients.push(CoefficientDecl {
                name: c.name,
                attribute: c.attribute,
                binding,
                kind: c.kind,
                transform: c.transform,
                interactions,
            });
        }

        // One coefficient per attribute and context.
        for (i, a) in coefficients.iter().enumerate() {
            for b in &coefficients[..i] {
                if a.attribute != b.attribute {
                    continue;
                }
                let mut ia = a.interactions.clone();
                let mut ib = b.interactions.clone();
                ia.sort();
                ib.sort();
                let overlap = match (&a.binding, &b.binding) {
                    (Binding::Modes(x), Binding::Modes(y)) => !x.is_disjoint(y),
                    _ => true,
                };
                if overlap && ia == ib {
                    return Err(SpecError::DuplicateBinding {
                        attribute: a.attribute.clone(),
                        first: b.name.clone(),
                        second: a.name.clone(),
                    });
                }
            }
        }

        let mut error_components = Vec::new();
        for e in raw.error_components {
            let mode = parse_mode(e.mode)?;
            if error_components.iter().any(|x: &ErrorComponentDecl| x.mode == mode) {
                return Err(SpecError::SyntaxError(format!("two error components for mode {}", e.mode)));
            }
            error_components.push(ErrorComponentDecl { mode });
        }

        let mut blocks = Vec::new();
        let mut in_block = BTreeSet::new();
        for b in raw.blocks {
            if b.members.is_empty() {
                return Err(SpecError::SyntaxError(format!("block `{}` has no members", b.id)));
            }
            let mut members = Vec::new();
            for m in &b.members {
                let &idx = by_name
                    .get(m)
                    .ok_or_else(|| SpecError::SyntaxError(format!("block `{}` lists unknown coefficient `{m}`", b.id)))?;
                if !coefficients[idx].is_random() {
                    return Err(SpecError::BlockMemberNotRandom { block: b.id.clone(), member: m.clone() });
                }
                if !in_block.insert(idx) {
                    return Err(SpecError::SyntaxError(format!("coefficient `{m}` appears in two blocks")));
                }
                members.push(idx);
            }
            blocks.push(CorrelationBlock { id: b.id, members });
        }

        let mut intercepts = Vec::new();
        for ic in raw.intercepts {
            let mode = parse_mode(ic.mode)?;
            if mode == Mode::ConventionalCar {
                return Err(SpecError::SyntaxError("conventional car is the intercept reference".into()));
            }
            if intercepts.iter().any(|x: &InterceptDecl| x.mode == mode) {
                return Err(SpecError::SyntaxError(format!("two intercepts for mode {}", ic.mode)));
            }
            let covariates = ic.covariates.iter().map(|s| parse_covariate(s)).collect::<Result<Vec<_>, _>>()?;
            intercepts.push(InterceptDecl { mode, covariates });
        }

        let spec = ModelSpec {
            name: raw.name,
            class: raw.class,
            coefficients,
            error_components,
            blocks,
            intercepts,
        };
        spec.check_class()?;
        Ok(spec)
    }
}

impl From<&ModelSpec> for RawSpec {
    fn from(spec: &ModelSpec) -> Self {
        RawSpec {
            name: spec.name.clone(),
            class: spec.class,
            coefficients: spec
                .coefficients
                .iter()
                .map(|c| RawCoefficient {
                    name: c.name.clone(),
                    attribute: c.attribute.clone(),
                    modes: match &c.binding {
                        Binding::Housing => None,
                        Binding::Modes(m) => Some(m.iter().map(|m| m.index()).collect()),
                    },
                    kind: c.kind,
                    transform: c.transform,
                    interactions: c.interactions.iter().map(|c| c.name().to_string()).collect(),
                })
                .collect(),
            error_components: spec.error_components.iter().map(|e| RawErrorComponent { mode: e.mode.index() }).collect(),
            blocks: spec
                .blocks
                .iter()
                .map(|b| RawBlock {
                    id: b.id.clone(),
                    members: b.members.iter().map(|&i| spec.coefficients[i].name.clone()).collect(),
                })
                .collect(),
            intercepts: spec
                .intercepts
                .iter()
                .map(|ic| RawIntercept {
                    mode: ic.mode.index(),
                    covariates: ic.covariates.iter().map(|c| c.name().to_string()).collect(),
                })
                .collect(),
        }
    }
}

impl Serialize for ModelSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RawSpec::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawSpec::deserialize(d)?;
        ModelSpec::try_from(raw).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Parsing and bundled specs
// ---------------------------------------------------------------------------

const BUNDLED: [(&str, &str); 4] = [
    ("paper_cmnl", include_str!("bundled/paper_cmnl.toml")),
    ("paper_ecmnl", include_str!("bundled/paper_ecmnl.toml")),
    ("paper_mmnl1", include_str!("bundled/paper_mmnl1.toml")),
    ("paper_mmnl2", include_str!("bundled/paper_mmnl2.toml")),
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn bundled_spec(name: &str) -> Result<ModelSpec, SpecError> {
    let (_, text) = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| SpecError::UnknownBundled(name.to_string()))?;
    ModelSpec::from_toml(text)
}

pub fn parse_spec(path: impl AsRef<Path>) -> Result<ModelSpec, SpecError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SpecError::Io(format!("{}: {e}", path.display())))?;
    ModelSpec::from_toml(&text)
}

/// Resolves a bundled spec name or a file path. A name that is neither is
/// reported as an unknown bundled spec.
pub fn load_spec(name_or_path: &str) -> Result<ModelSpec, SpecError> {
    if BUNDLED.iter().any(|(n, _)| *n == name_or_path) {
        bundled_spec(name_or_path)
    } else if Path::new(name_or_path).exists() || name_or_path.ends_with(".toml") {
        parse_spec(name_or_path)
    } else {
        Err(SpecError::UnknownBundled(name_or_path.to_string()))
    }
}

impl ModelSpec {
    pub fn from_toml(text: &str) -> Result<Self, SpecError> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            if let Some(var) = msg.strip_prefix("unknown variant `") {
                let name = var.split('`').next().unwrap_or(var);
                return SpecError::UnknownAttribute(name.to_string());
            }
            SpecError::SyntaxError(e.to_string())
        })?;
        ModelSpec::try_from(raw)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&RawSpec::from(self)).expect("spec serializes")
    }

    fn check_class(&self) -> Result<(), SpecError> {
        let n_random = self.coefficients.iter().filter(|c| c.is_random()).count();
        let fail = |what: &str| Err(SpecError::ClassMismatch { class: self.class, what: what.to_string() });
        match self.class {
            ModelClass::Cmnl => {
                if n_random > 0 {
                    return fail("random coefficients");
                }
                if !self.error_components.is_empty() {
                    return fail("error components");
                }
            }
            ModelClass::Ecmnl => {
                if n_random > 0 {
                    return fail("random coefficients");
                }
            }
            ModelClass::Mmnl1 => {
                if !self.blocks.is_empty() {
                    return fail("correlation blocks");
                }
            }
            ModelClass::Mmnl2 => {}
        }
        Ok(())
    }

    pub fn coefficient_index(&self, name: &str) -> Option<usize> {
        self.coefficients.iter().position(|c| c.name == name)
    }

    /// Block containing coefficient `c`, with its position inside the block.
    pub fn block_of(&self, c: usize) -> Option<(usize, usize)> {
        self.blocks
            .iter()
            .enumerate()
            .find_map(|(b, blk)| blk.members.iter().position(|&m| m == c).map(|pos| (b, pos)))
    }

    pub fn random_coefficients(&self) -> impl Iterator<Item = usize> + '_ {
        self.coefficients.iter().enumerate().filter(|(_, c)| c.is_random()).map(|(i, _)| i)
    }

    /// Names of the draw dimensions: random coefficients in declaration
    /// order, then error components.
    pub fn draw_symbols(&self) -> Vec<String> {
        let mut out: Vec<String> = self.random_coefficients().map(|i| self.coefficients[i].name.clone()).collect();
        out.extend(self.error_components.iter().map(|e| format!("eta.{}", e.mode)));
        out
    }

    pub fn n_draw_dims(&self) -> usize {
        self.random_coefficients().count() + self.error_components.len()
    }

    /// The free parameter vector layout.
    pub fn parameters(&self) -> Vec<ParamInfo> {
        let mut out = Vec::new();
        for (i, c) in self.coefficients.iter().enumerate() {
            out.push(ParamInfo { name: c.name.clone(), role: ParamRole::Coefficient(i) });
        }
        for (i, c) in self.coefficients.iter().enumerate() {
            if c.is_random() && self.block_of(i).is_none() {
                out.push(ParamInfo { name: format!("{}.sd", c.name), role: ParamRole::Scale(i) });
            }
        }
        for (b, blk) in self.blocks.iter().enumerate() {
            for row in 0..blk.members.len() {
                for col in 0..=row {
                    let rn = &self.coefficients[blk.members[row]].name;
                    let cn = &self.coefficients[blk.members[col]].name;
                    out.push(ParamInfo {
                        name: format!("chol.{}[{rn},{cn}]", blk.id),
                        role: ParamRole::Cholesky { block: b, row, col },
                    });
                }
            }
        }
        for (e, ec) in self.error_components.iter().enumerate() {
            out.push(ParamInfo { name: format!("tau.{}", ec.mode), role: ParamRole::ErrorScale(e) });
        }
        for (k, ic) in self.intercepts.iter().enumerate() {
            out.push(ParamInfo { name: format!("asc.{}.baseline", ic.mode), role: ParamRole::InterceptBaseline(k) });
            for (j, cov) in ic.covariates.iter().enumerate() {
                out.push(ParamInfo {
                    name: format!("asc.{}.{}", ic.mode, cov.name()),
                    role: ParamRole::InterceptShift(k, j),
                });
            }
        }
        out
    }

    pub fn parameter_names(&self) -> Vec<String> {
        self.parameters().into_iter().map(|p| p.name).collect()
    }

    pub fn count_parameters(&self) -> usize {
        let coefs = self.coefficients.len();
        let scales = self.random_coefficients().filter(|&i| self.block_of(i).is_none()).count();
        let chol: usize = self.blocks.iter().map(|b| b.members.len() * (b.members.len() + 1) / 2).sum();
        let shifters: usize = self.intercepts.iter().map(|ic| 1 + ic.covariates.len()).sum();
        coefs + scales + chol + self.error_components.len() + shifters
    }

    /// Every `h_*`/`m_*` attribute the spec reads.
    pub fn attributes(&self) -> BTreeSet<&str> {
        self.coefficients.iter().map(|c| c.attribute.as_str()).collect()
    }

    /// The nested specification of a simpler class: blocks dissolve into
    /// independent scales, random tastes become fixed, error components drop
    /// last.
    pub fn reduced(&self, class: ModelClass) -> ModelSpec {
        let mut out = self.clone();
        out.class = class;
        out.name = format!("{}@{}", self.name, format!("{class:?}").to_lowercase());
        if class <= ModelClass::Mmnl1 {
            out.blocks.clear();
        }
        if class <= ModelClass::Ecmnl {
            for c in &mut out.coefficients {
                c.kind = CoefficientKind::Fixed;
            }
        }
        if class == ModelClass::Cmnl {
            out.error_components.clear();
        }
        out
    }

    /// Same spec with every error component removed.
    pub fn without_error_components(&self) -> ModelSpec {
        let mut out = self.clone();
        out.error_components.clear();
        out
    }
}

/// Maps a parameter vector of `from` into the layout of `to`, by name. A
/// scale of `from` seeds the diagonal Cholesky entry of the same coefficient
/// in `to`; scales and error scales new to `to` start at `new_scale`; all
/// other new entries start at zero.
pub fn embed_parameters(from: &ModelSpec, theta: &[f64], to: &ModelSpec, new_scale: f64) -> Vec<f64> {
    let src: BTreeMap<String, f64> = from.parameter_names().into_iter().zip(theta.iter().copied()).collect();
    to.parameters()
        .into_iter()
        .map(|p| {
            if let Some(&v) = src.get(&p.name) {
                return v;
            }
            match p.role {
                ParamRole::Cholesky { block, row, col } if row == col => {
                    let member = &to.coefficients[to.blocks[block].members[row]].name;
                    src.get(&format!("{member}.sd")).copied().unwrap_or(new_scale)
                }
                ParamRole::Scale(_) | ParamRole::ErrorScale(_) => new_scale,
                _ => 0.0,
            }
        })
        .collect()
}
