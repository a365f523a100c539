//! Fitted per-column preprocessing.
//!
//! Continuous columns are min-max scaled to `[0, 1]` (values outside the fit
//! range extrapolate linearly), energy classes map to `ordinal / 7`, region
//! expands to a one-hot block and booleans pass through as 0/1. Regression
//! targets are min-max scaled; classification targets stay raw.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::clean::{Cell, CleanTable};
use super::IngestError;
use crate::domain::{ColumnKind, ColumnSpec, EnergyClass, Task};

pub const SCALERS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    MinMax { min: f64, max: f64, degenerate: bool },
    Ordinal { vocab: Vec<String> },
    OneHot { vocab: Vec<String> },
    Passthrough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaler {
    pub name: String,
    pub column_kind: ColumnKind,
    pub optional: bool,
    pub transform: Transform,
    /// Training-column mean, present for optional continuous columns.
    pub impute_mean: Option<f64>,
}

impl ColumnScaler {
    pub fn width(&self) -> usize {
        match &self.transform {
            Transform::OneHot { vocab } => vocab.len(),
            _ => 1,
        }
    }

    pub fn encoded_names(&self) -> Vec<String> {
        match &self.transform {
            Transform::OneHot { vocab } => vocab.iter().map(|v| format!("{}={v}", self.name)).collect(),
            _ => vec![self.name.clone()],
        }
    }

    fn mismatch(&self, cell: &Cell) -> IngestError {
        IngestError::CellMismatch {
            column: self.name.clone(),
            value: format!("{cell:?}"),
        }
    }

    fn encode(&self, cell: &Cell, out: &mut Vec<f64>) -> Result<(), IngestError> {
        let cell = match (cell, self.impute_mean) {
            (Cell::Missing, Some(mean)) => &Cell::Number(mean),
            (Cell::Missing, None) => return Err(IngestError::MissingValue(self.name.clone())),
            (c, _) => c,
        };
        match (&self.transform, cell) {
            (Transform::MinMax { min, max, degenerate }, Cell::Number(x)) => {
                out.push(if *degenerate { 0.0 } else { (x - min) / (max - min) });
            }
            (Transform::Ordinal { vocab }, Cell::Class(c)) => {
                let idx = vocab
                    .iter()
                    .position(|v| v == c.label())
                    .ok_or_else(|| IngestError::UnseenCategory {
                        column: self.name.clone(),
                        value: c.label().to_string(),
                    })?;
                out.push((idx + 1) as f64 / vocab.len() as f64);
            }
            (Transform::OneHot { vocab }, Cell::Category(v)) => {
                let idx = vocab.iter().position(|x| x == v).ok_or_else(|| {
                    IngestError::UnseenCategory {
                        column: self.name.clone(),
                        value: v.clone(),
                    }
                })?;
                out.extend((0..vocab.len()).map(|i| if i == idx { 1.0 } else { 0.0 }));
            }
            (Transform::Passthrough, Cell::Flag(b)) => out.push(if *b { 1.0 } else { 0.0 }),
            (Transform::Passthrough, Cell::Number(x)) => out.push(*x),
            _ => return Err(self.mismatch(cell)),
        }
        Ok(())
    }

    fn decode(&self, values: &[f64]) -> Result<Cell, IngestError> {
        debug_assert_eq!(values.len(), self.width());
        let v = values[0];
        Ok(match &self.transform {
            Transform::MinMax { min, max, degenerate } => {
                Cell::Number(if *degenerate { *min } else { v * (max - min) + min })
            }
            Transform::Ordinal { vocab } => {
                let idx = (v * vocab.len() as f64).round() as i64 - 1;
                let idx = idx.clamp(0, vocab.len() as i64 - 1) as usize;
                let class = crate::domain::parse_energy_class(&vocab[idx])
                    .map_err(|_| IngestError::CellMismatch {
                        column: self.name.clone(),
                        value: vocab[idx].clone(),
                    })?;
                Cell::Class(class)
            }
            Transform::OneHot { vocab } => {
                let mut best = 0;
                for (i, x) in values.iter().enumerate() {
                    if *x > values[best] {
                        best = i;
                    }
                }
                Cell::Category(vocab[best].clone())
            }
            Transform::Passthrough => match self.column_kind {
                ColumnKind::Boolean => Cell::Flag(v >= 0.5),
                _ => Cell::Number(v),
            },
        })
    }

    /// Maps a scaled scalar back to raw units (min-max columns only).
    pub fn unscale(&self, v: f64) -> f64 {
        match &self.transform {
            Transform::MinMax { min, degenerate: true, .. } => *min,
            Transform::MinMax { min, max, .. } => v * (max - min) + min,
            _ => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerSet {
    pub format_version: u32,
    pub task: Task,
    pub features: Vec<ColumnScaler>,
    pub targets: Vec<ColumnScaler>,
    pub targets_scaled: bool,
    /// SHA-256 over the rows the scalers were fitted on.
    pub fingerprint: String,
    pub fit_rows: usize,
}

/// Content hash of a set of typed rows together with their column names.
pub fn fingerprint_rows(columns: &[ColumnSpec], rows: &[Vec<Cell>]) -> String {
    let mut hasher = Sha256::new();
    for c in columns {
        hasher.update(c.name.as_bytes());
        hasher.update([0x1f]);
    }
    hasher.update([0x1e]);
    for row in rows {
        for cell in row {
            hasher.update(cell.render().as_bytes());
            hasher.update([0x1f]);
        }
        hasher.update([0x1e]);
    }
    hex(&hasher.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn fit_column(spec: &ColumnSpec, cells: &[&Cell], scale_continuous: bool) -> Result<ColumnScaler, IngestError> {
    let numbers = || cells.iter().filter_map(|c| match c {
        Cell::Number(x) => Some(*x),
        _ => None,
    });
    let transform = match spec.kind {
        ColumnKind::Continuous if scale_continuous => {
            let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
            for x in numbers() {
                min = min.min(x);
                max = max.max(x);
            }
            if !min.is_finite() {
                return Err(IngestError::MissingValue(spec.name.clone()));
            }
            Transform::MinMax { min, max, degenerate: max <= min }
        }
        ColumnKind::Continuous => Transform::Passthrough,
        ColumnKind::OrdinalClass => Transform::Ordinal {
            vocab: EnergyClass::ALL.iter().map(|c| c.label().to_string()).collect(),
        },
        ColumnKind::Categorical => {
            let vocab: BTreeSet<&str> = cells
                .iter()
                .filter_map(|c| match c {
                    Cell::Category(s) => Some(s.as_str()),
                    _ => None,
                })
                .collect();
            if vocab.is_empty() {
                return Err(IngestError::MissingValue(spec.name.clone()));
            }
            Transform::OneHot {
                vocab: vocab.into_iter().map(str::to_string).collect(),
            }
        }
        ColumnKind::Boolean => Transform::Passthrough,
    };
    let impute_mean = if spec.optional && spec.kind == ColumnKind::Continuous {
        let (sum, n) = numbers().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
        if n == 0 {
            return Err(IngestError::MissingValue(spec.name.clone()));
        }
        Some(sum / n as f64)
    } else {
        None
    };
    Ok(ColumnScaler {
        name: spec.name.clone(),
        column_kind: spec.kind,
        optional: spec.optional,
        transform,
        impute_mean,
    })
}

/// Fits one transform per column over every row of `table`.
pub fn fit_scalers(table: &CleanTable) -> Result<ScalerSet, IngestError> {
    if table.rows.is_empty() {
        return Err(IngestError::EmptyTable);
    }
    let schema = &table.schema;
    let nf = schema.feature_cols.len();
    let column = |j: usize| table.rows.iter().map(|r| &r[j]).collect::<Vec<_>>();
    let features = schema
        .feature_cols
        .iter()
        .enumerate()
        .map(|(j, spec)| fit_column(spec, &column(j), true))
        .collect::<Result<Vec<_>, _>>()?;
    let targets_scaled = schema.task == Task::Regressor;
    let targets = schema
        .target_cols
        .iter()
        .enumerate()
        .map(|(j, spec)| fit_column(spec, &column(nf + j), targets_scaled))
        .collect::<Result<Vec<_>, _>>()?;
    let columns: Vec<ColumnSpec> = schema.columns().cloned().collect();
    Ok(ScalerSet {
        format_version: SCALERS_FORMAT_VERSION,
        task: schema.task,
        features,
        targets,
        targets_scaled,
        fingerprint: fingerprint_rows(&columns, &table.rows),
        fit_rows: table.rows.len(),
    })
}

impl ScalerSet {
    pub fn feature_width(&self) -> usize {
        self.features.iter().map(ColumnScaler::width).sum()
    }

    pub fn target_width(&self) -> usize {
        self.targets.iter().map(ColumnScaler::width).sum()
    }

    pub fn encoded_feature_names(&self) -> Vec<String> {
        self.features.iter().flat_map(ColumnScaler::encoded_names).collect()
    }

    pub fn encoded_target_names(&self) -> Vec<String> {
        self.targets.iter().flat_map(ColumnScaler::encoded_names).collect()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|c| c.name.clone()).collect()
    }

    pub fn target_names(&self) -> Vec<String> {
        self.targets.iter().map(|c| c.name.clone()).collect()
    }

    fn encode(columns: &[ColumnScaler], cells: &[Cell]) -> Result<Vec<f64>, IngestError> {
        if cells.len() != columns.len() {
            return Err(IngestError::RowWidth {
                expected: columns.len(),
                found: cells.len(),
            });
        }
        let mut out = Vec::with_capacity(columns.len() + 4);
        for (scaler, cell) in columns.iter().zip(cells) {
            scaler.encode(cell, &mut out)?;
        }
        Ok(out)
    }

    fn decode(columns: &[ColumnScaler], values: &[f64]) -> Result<Vec<Cell>, IngestError> {
        let width: usize = columns.iter().map(ColumnScaler::width).sum();
        if values.len() != width {
            return Err(IngestError::RowWidth {
                expected: width,
                found: values.len(),
            });
        }
        let mut offset = 0;
        columns
            .iter()
            .map(|c| {
                let cell = c.decode(&values[offset..offset + c.width()]);
                offset += c.width();
                cell
            })
            .collect()
    }

    pub fn transform_features(&self, cells: &[Cell]) -> Result<Vec<f64>, IngestError> {
        Self::encode(&self.features, cells)
    }

    pub fn transform_targets(&self, cells: &[Cell]) -> Result<Vec<f64>, IngestError> {
        Self::encode(&self.targets, cells)
    }

    /// Encodes a full row (features then targets).
    pub fn transform(&self, row: &[Cell]) -> Result<Vec<f64>, IngestError> {
        let nf = self.features.len();
        if row.len() != nf + self.targets.len() {
            return Err(IngestError::RowWidth {
                expected: nf + self.targets.len(),
                found: row.len(),
            });
        }
        let mut out = self.transform_features(&row[..nf])?;
        out.extend(self.transform_targets(&row[nf..])?);
        Ok(out)
    }

    pub fn inverse_features(&self, values: &[f64]) -> Result<Vec<Cell>, IngestError> {
        Self::decode(&self.features, values)
    }

    pub fn inverse_targets(&self, values: &[f64]) -> Result<Vec<Cell>, IngestError> {
        Self::decode(&self.targets, values)
    }

    /// Decodes a full encoded row back to typed cells.
    pub fn inverse_transform(&self, values: &[f64]) -> Result<Vec<Cell>, IngestError> {
        let fw = self.feature_width();
        if values.len() != fw + self.target_width() {
            return Err(IngestError::RowWidth {
                expected: fw + self.target_width(),
                found: values.len(),
            });
        }
        let mut row = self.inverse_features(&values[..fw])?;
        row.extend(self.inverse_targets(&values[fw..])?);
        Ok(row)
    }

    /// Target values in raw units, from model outputs in scaled units.
    pub fn unscale_targets(&self, values: &[f64]) -> Vec<f64> {
        if !self.targets_scaled {
            return values.to_vec();
        }
        self.targets.iter().zip(values).map(|(c, v)| c.unscale(*v)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        let text = serde_json::to_string_pretty(self).expect("scalers serialize");
        std::fs::write(path, text).map_err(|e| IngestError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| IngestError::Io(format!("{}: {e}", path.display())))?;
        let set: ScalerSet = serde_json::from_str(&text)
            .map_err(|e| IngestError::Io(format!("{}: {e}", path.display())))?;
        if set.format_version != SCALERS_FORMAT_VERSION {
            return Err(IngestError::Io(format!(
                "{}: unsupported scalers format {}",
                path.display(),
                set.format_version
            )));
        }
        Ok(set)
    }
}
