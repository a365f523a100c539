//! Feature and target schemas of the retrofit and photovoltaic services.
//!
//! Canonical snake_case field names defined here are the contract for CSV
//! headers, API payloads and run configurations.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub type RawRecord = Map<String, Value>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("field `{0}` is out of range")]
    OutOfRange(String),
    #[error("field `{0}` has the wrong type")]
    InvalidType(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("unknown energy class `{label}`")]
    UnknownClass { label: String, field: Option<String> },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
}

impl DomainError {
    /// The offending field, when the error is attributable to one.
    pub fn field(&self) -> Option<&str> {
        match self {
            DomainError::MissingField(f)
            | DomainError::OutOfRange(f)
            | DomainError::InvalidType(f)
            | DomainError::UnknownField(f)
            | DomainError::UnknownColumn(f) => Some(f),
            DomainError::UnknownClass { field, .. } => field.as_deref(),
            DomainError::InvalidSchema(_) => None,
        }
    }
}

/// Building energy-efficiency class, A (best) to G (worst).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EnergyClass {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
}

impl EnergyClass {
    pub const ALL: [EnergyClass; 7] = [
        EnergyClass::A,
        EnergyClass::B,
        EnergyClass::C,
        EnergyClass::D,
        EnergyClass::E,
        EnergyClass::F,
        EnergyClass::G,
    ];

    pub fn ordinal(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_ordinal(ordinal: u8) -> Option<Self> {
        Self::ALL.get(usize::from(ordinal).checked_sub(1)?).copied()
    }

    pub fn label(self) -> &'static str {
        ["A", "B", "C", "D", "E", "F", "G"][self as usize]
    }
}

impl fmt::Display for EnergyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for EnergyClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for EnergyClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_energy_class(&text).map_err(serde::de::Error::custom)
    }
}

/// Parses an energy-class label, ignoring case and surrounding whitespace.
pub fn parse_energy_class(text: &str) -> Result<EnergyClass, DomainError> {
    let trimmed = text.trim();
    let mut chars = trimmed.chars();
    let class = match (chars.next().map(|c| c.to_ascii_uppercase()), chars.next()) {
        (Some('A'), None) => EnergyClass::A,
        (Some('B'), None) => EnergyClass::B,
        (Some('C'), None) => EnergyClass::C,
        (Some('D'), None) => EnergyClass::D,
        (Some('E'), None) => EnergyClass::E,
        (Some('F'), None) => EnergyClass::F,
        (Some('G'), None) => EnergyClass::G,
        _ => {
            return Err(DomainError::UnknownClass {
                label: trimmed.to_string(),
                field: None,
            })
        }
    };
    Ok(class)
}

/// Region name. Open at parse time, checked against the fitted vocabulary
/// when the features are encoded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Region(String);

impl Region {
    pub fn new(name: impl Into<String>) -> Result<Self, DomainError> {
        let name = name.into().trim().to_string();
        if name.is_empty() {
            return Err(DomainError::OutOfRange("region".into()));
        }
        Ok(Region(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrofitFeatures {
    pub building_total_area: f64,
    pub above_ground_floors: u32,
    pub energy_consumption_before: f64,
    pub initial_energy_class: EnergyClass,
    pub energy_class_after: EnergyClass,
}

pub const RETROFIT_FEATURES: [&str; 5] = [
    "building_total_area",
    "above_ground_floors",
    "energy_consumption_before",
    "initial_energy_class",
    "energy_class_after",
];

pub const RETROFIT_TARGETS: [&str; 4] = [
    "carrying_out_construction_works",
    "reconstruction_of_engineering_systems",
    "heat_installation",
    "water_heating_system",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrofitTargets {
    pub carrying_out_construction_works: bool,
    pub reconstruction_of_engineering_systems: bool,
    pub heat_installation: bool,
    pub water_heating_system: bool,
}

impl RetrofitTargets {
    pub fn from_array(values: [bool; 4]) -> Self {
        Self {
            carrying_out_construction_works: values[0],
            reconstruction_of_engineering_systems: values[1],
            heat_installation: values[2],
            water_heating_system: values[3],
        }
    }

    pub fn to_array(self) -> [bool; 4] {
        [
            self.carrying_out_construction_works,
            self.reconstruction_of_engineering_systems,
            self.heat_installation,
            self.water_heating_system,
        ]
    }
}

pub const PV_FEATURES: [&str; 7] = [
    "average_electricity_price",
    "average_monthly_consumption_before",
    "installation_cost",
    "current_inverter_set_power",
    "planned_inverter_set_power",
    "average_energy_generated",
    "region",
];

pub const PV_TARGETS: [&str; 7] = [
    "electricity_produced",
    "primary_energy_consumption_after",
    "reduction_of_primary_energy",
    "co2_emissions_reduction",
    "expected_annual_self_consumption",
    "annual_financial_savings",
    "payback_period",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PvFeatures {
    pub average_electricity_price: f64,
    pub average_monthly_consumption_before: f64,
    pub installation_cost: f64,
    pub current_inverter_set_power: f64,
    pub planned_inverter_set_power: f64,
    pub average_energy_generated: Option<f64>,
    pub region: Region,
}

impl PvFeatures {
    /// True when the generated-energy input was left blank and must be imputed.
    pub fn needs_imputation(&self) -> bool {
        self.average_energy_generated.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PvTargets {
    pub electricity_produced: f64,
    pub primary_energy_consumption_after: f64,
    pub reduction_of_primary_energy: f64,
    pub co2_emissions_reduction: f64,
    pub expected_annual_self_consumption: f64,
    pub annual_financial_savings: f64,
    pub payback_period: f64,
}

impl PvTargets {
    pub fn from_array(v: [f64; 7]) -> Self {
        Self {
            electricity_produced: v[0],
            primary_energy_consumption_after: v[1],
            reduction_of_primary_energy: v[2],
            co2_emissions_reduction: v[3],
            expected_annual_self_consumption: v[4],
            annual_financial_savings: v[5],
            payback_period: v[6],
        }
    }
}

struct RecordReader<'a> {
    record: &'a RawRecord,
}

impl<'a> RecordReader<'a> {
    fn new(record: &'a RawRecord, allowed: &[&str]) -> Result<Self, DomainError> {
        if let Some(unknown) = record.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(DomainError::UnknownField(unknown.clone()));
        }
        Ok(Self { record })
    }

    /// `None` for absent keys, JSON null and blank strings.
    fn optional_number(&self, name: &str) -> Result<Option<f64>, DomainError> {
        let value = match self.record.get(name) {
            None | Some(Value::Null) => return Ok(None),
            Some(v) => v,
        };
        let number = match value {
            Value::Number(n) => n.as_f64(),
            Value::String(s) if s.trim().is_empty() => return Ok(None),
            Value::String(s) => s.trim().parse::<f64>().ok(),
            _ => None,
        };
        match number {
            Some(x) if x.is_finite() => Ok(Some(x)),
            Some(_) => Err(DomainError::OutOfRange(name.into())),
            None => Err(DomainError::InvalidType(name.into())),
        }
    }

    fn number(&self, name: &str) -> Result<f64, DomainError> {
        self.optional_number(name)?
            .ok_or_else(|| DomainError::MissingField(name.into()))
    }

    fn positive(&self, name: &str) -> Result<f64, DomainError> {
        let x = self.number(name)?;
        if x > 0.0 {
            Ok(x)
        } else {
            Err(DomainError::OutOfRange(name.into()))
        }
    }

    fn non_negative(&self, name: &str) -> Result<f64, DomainError> {
        let x = self.number(name)?;
        if x >= 0.0 {
            Ok(x)
        } else {
            Err(DomainError::OutOfRange(name.into()))
        }
    }

    fn text(&self, name: &str) -> Result<&'a str, DomainError> {
        match self.record.get(name) {
            None | Some(Value::Null) => Err(DomainError::MissingField(name.into())),
            Some(Value::String(s)) if s.trim().is_empty() => {
                Err(DomainError::MissingField(name.into()))
            }
            Some(Value::String(s)) => Ok(s),
            Some(_) => Err(DomainError::InvalidType(name.into())),
        }
    }

    fn energy_class(&self, name: &str) -> Result<EnergyClass, DomainError> {
        parse_energy_class(self.text(name)?).map_err(|e| match e {
            DomainError::UnknownClass { label, .. } => DomainError::UnknownClass {
                label,
                field: Some(name.into()),
            },
            other => other,
        })
    }
}

pub fn validate_retrofit_features(candidate: &RawRecord) -> Result<RetrofitFeatures, DomainError> {
    let r = RecordReader::new(candidate, &RETROFIT_FEATURES)?;
    let floors = r.positive("above_ground_floors")?;
    if floors.fract() != 0.0 || floors > f64::from(u32::MAX) {
        return Err(DomainError::OutOfRange("above_ground_floors".into()));
    }
    Ok(RetrofitFeatures {
        building_total_area: r.positive("building_total_area")?,
        above_ground_floors: floors as u32,
        energy_consumption_before: r.positive("energy_consumption_before")?,
        initial_energy_class: r.energy_class("initial_energy_class")?,
        energy_class_after: r.energy_class("energy_class_after")?,
    })
}

pub fn validate_pv_features(candidate: &RawRecord) -> Result<PvFeatures, DomainError> {
    let r = RecordReader::new(candidate, &PV_FEATURES)?;
    let generated = r.optional_number("average_energy_generated")?;
    if matches!(generated, Some(x) if x <= 0.0) {
        return Err(DomainError::OutOfRange("average_energy_generated".into()));
    }
    Ok(PvFeatures {
        average_electricity_price: r.positive("average_electricity_price")?,
        average_monthly_consumption_before: r.positive("average_monthly_consumption_before")?,
        installation_cost: r.non_negative("installation_cost")?,
        current_inverter_set_power: r.non_negative("current_inverter_set_power")?,
        planned_inverter_set_power: r.positive("planned_inverter_set_power")?,
        average_energy_generated: generated,
        region: Region::new(r.text("region")?)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    Classifier,
    Regressor,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Classifier => "Classifier",
            Task::Regressor => "Regressor",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    OrdinalClass,
    Categorical,
    Boolean,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default)]
    pub optional: bool,
}

impl ColumnSpec {
    fn new(name: &str, kind: ColumnKind, optional: bool) -> Self {
        Self {
            name: name.to_string(),
            kind,
            optional,
        }
    }
}

/// Every column the two services know about.
pub fn known_column(name: &str) -> Option<ColumnSpec> {
    use ColumnKind::*;
    let (kind, optional) = match name {
        "building_total_area" | "energy_consumption_before" => (Continuous, false),
        "above_ground_floors" => (Continuous, false),
        "initial_energy_class" | "energy_class_after" => (OrdinalClass, false),
        "average_electricity_price"
        | "average_monthly_consumption_before"
        | "installation_cost"
        | "current_inverter_set_power"
        | "planned_inverter_set_power" => (Continuous, false),
        "average_energy_generated" => (Continuous, true),
        "region" => (Categorical, false),
        n if RETROFIT_TARGETS.contains(&n) => (Boolean, false),
        n if PV_TARGETS.contains(&n) => (Continuous, false),
        _ => return None,
    };
    Some(ColumnSpec::new(name, kind, optional))
}

/// Maps a human label such as "Above ground floors" onto its canonical
/// snake_case column name.
pub fn canonical_column_name(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    let mut pending_sep = false;
    for c in label.trim().chars() {
        if c.is_ascii_alphanumeric() {
            if pending_sep && !out.is_empty() {
                out.push('_');
            }
            pending_sep = false;
            out.push(c.to_ascii_lowercase());
        } else {
            pending_sep = true;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub feature_cols: Vec<ColumnSpec>,
    pub target_cols: Vec<ColumnSpec>,
    pub task: Task,
}

impl DatasetSchema {
    pub fn new(
        feature_cols: Vec<ColumnSpec>,
        target_cols: Vec<ColumnSpec>,
        task: Task,
    ) -> Result<Self, DomainError> {
        if feature_cols.is_empty() || target_cols.is_empty() {
            return Err(DomainError::InvalidSchema(
                "feature and target lists must be non-empty".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for col in feature_cols.iter().chain(&target_cols) {
            if !seen.insert(col.name.as_str()) {
                return Err(DomainError::InvalidSchema(format!(
                    "duplicate column `{}`",
                    col.name
                )));
            }
        }
        for col in &target_cols {
            let ok = match task {
                Task::Classifier => col.kind == ColumnKind::Boolean,
                Task::Regressor => col.kind == ColumnKind::Continuous,
            };
            if !ok || col.optional {
                return Err(DomainError::InvalidSchema(format!(
                    "target `{}` is not valid for a {task}",
                    col.name
                )));
            }
        }
        Ok(Self {
            feature_cols,
            target_cols,
            task,
        })
    }

    /// Builds a schema from column labels, resolving kinds from the known
    /// service columns.
    pub fn from_names<S: AsRef<str>>(
        features: &[S],
        targets: &[S],
        task: Task,
    ) -> Result<Self, DomainError> {
        let lookup = |label: &S| {
            let name = canonical_column_name(label.as_ref());
            known_column(&name).ok_or(DomainError::UnknownColumn(label.as_ref().to_string()))
        };
        let features = features.iter().map(lookup).collect::<Result<Vec<_>, _>>()?;
        let targets = targets.iter().map(lookup).collect::<Result<Vec<_>, _>>()?;
        Self::new(features, targets, task)
    }

    pub fn retrofit() -> Self {
        Self::from_names(&RETROFIT_FEATURES, &RETROFIT_TARGETS, Task::Classifier)
            .expect("built-in retrofit schema")
    }

    pub fn pv() -> Self {
        Self::from_names(&PV_FEATURES, &PV_TARGETS, Task::Regressor).expect("built-in pv schema")
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.feature_cols.iter().map(|c| c.name.clone()).collect()
    }

    pub fn target_names(&self) -> Vec<String> {
        self.target_cols.iter().map(|c| c.name.clone()).collect()
    }

    pub fn columns(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.feature_cols.iter().chain(&self.target_cols)
    }
}
