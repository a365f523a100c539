use serde::{Deserialize, Serialize};

use super::fetch::RawTable;
use super::IngestError;
use crate::domain::{parse_energy_class, ColumnKind, ColumnSpec, DatasetSchema, EnergyClass};

/// A typed cell of a cleaned table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Number(f64),
    Class(EnergyClass),
    Category(String),
    Flag(bool),
    /// An optional feature left blank; imputed at transform time.
    Missing,
}

impl Cell {
    /// Canonical text form, used for fingerprints and report echoes.
    pub fn render(&self) -> String {
        match self {
            Cell::Number(x) => format!("{x}"),
            Cell::Class(c) => c.label().to_string(),
            Cell::Category(s) => s.clone(),
            Cell::Flag(b) => if *b { "1" } else { "0" }.to_string(),
            Cell::Missing => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedRow {
    /// 1-based line in the source CSV (header is line 1).
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CleanReport {
    pub rows_in: usize,
    pub rows_retained: usize,
    pub dropped: Vec<DroppedRow>,
    /// Per optional column, how many retained rows need imputation.
    pub missing_optional: Vec<(String, usize)>,
}

/// Typed rows ordered as `schema.feature_cols` followed by `schema.target_cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanTable {
    pub schema: DatasetSchema,
    pub rows: Vec<Vec<Cell>>,
    pub report: CleanReport,
}

impl CleanTable {
    pub fn n_features(&self) -> usize {
        self.schema.feature_cols.len()
    }

    pub fn with_rows(&self, rows: Vec<Vec<Cell>>) -> CleanTable {
        CleanTable {
            schema: self.schema.clone(),
            rows,
            report: self.report.clone(),
        }
    }
}

pub fn parse_bool(text: &str) -> Option<bool> {
    match text.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" | "t" | "1.0" => Some(true),
        "0" | "false" | "no" | "n" | "f" | "0.0" => Some(false),
        _ => None,
    }
}

/// Parses one text cell according to its column spec.
pub fn parse_cell(spec: &ColumnSpec, text: &str) -> Result<Cell, String> {
    let text = text.trim();
    match spec.kind {
        ColumnKind::Continuous => text
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .map(Cell::Number)
            .ok_or_else(|| format!("coercion failure in `{}`: {text:?}", spec.name)),
        ColumnKind::OrdinalClass => parse_energy_class(text)
            .map(Cell::Class)
            .map_err(|_| format!("coercion failure in `{}`: {text:?}", spec.name)),
        ColumnKind::Categorical => Ok(Cell::Category(text.to_string())),
        ColumnKind::Boolean => parse_bool(text)
            .map(Cell::Flag)
            .ok_or_else(|| format!("coercion failure in `{}`: {text:?}", spec.name)),
    }
}

/// Drops rows with missing required values or cells that fail type
/// coercion, recording the reason for each.
pub fn clean(raw: &RawTable, schema: &DatasetSchema) -> Result<CleanTable, IngestError> {
    let missing: Vec<String> = schema
        .columns()
        .filter(|c| raw.column_index(&c.name).is_none())
        .map(|c| c.name.clone())
        .collect();
    if !missing.is_empty() {
        return Err(IngestError::SchemaMismatch(missing));
    }
    let specs: Vec<(&ColumnSpec, usize)> = schema
        .columns()
        .map(|c| (c, raw.column_index(&c.name).expect("checked above")))
        .collect();
    let n_targets = schema.target_cols.len();
    let n_features = schema.feature_cols.len();

    let mut rows = Vec::with_capacity(raw.len());
    let mut dropped = Vec::new();
    let mut missing_optional = vec![0usize; n_features];
    'rows: for (i, raw_row) in raw.rows.iter().enumerate() {
        let line = i + 2;
        let mut row = Vec::with_capacity(specs.len());
        for (pos, (spec, idx)) in specs.iter().enumerate() {
            let text = raw_row[*idx].trim();
            if text.is_empty() {
                if spec.optional {
                    row.push(Cell::Missing);
                    continue;
                }
                let what = if pos >= n_features { "target" } else { "feature" };
                log::debug!("dropping line {line}: missing {what} `{}`", spec.name);
                dropped.push(DroppedRow {
                    line,
                    reason: format!("missing {what} `{}`", spec.name),
                });
                continue 'rows;
            }
            match parse_cell(spec, text) {
                Ok(cell) => row.push(cell),
                Err(reason) => {
                    log::debug!("dropping line {line}: {reason}");
                    dropped.push(DroppedRow { line, reason });
                    continue 'rows;
                }
            }
        }
        for (j, cell) in row[..n_features].iter().enumerate() {
            if matches!(cell, Cell::Missing) {
                missing_optional[j] += 1;
            }
        }
        rows.push(row);
    }
    debug_assert!(rows.iter().all(|r| r.len() == n_features + n_targets));

    let report = CleanReport {
        rows_in: raw.len(),
        rows_retained: rows.len(),
        dropped,
        missing_optional: schema
            .feature_cols
            .iter()
            .zip(missing_optional)
            .filter(|(c, _)| c.optional)
            .map(|(c, n)| (c.name.clone(), n))
            .collect(),
    };
    Ok(CleanTable {
        schema: schema.clone(),
        rows,
        report,
    })
}
