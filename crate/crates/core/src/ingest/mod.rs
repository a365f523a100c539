//! Data ingestion: source resolution, fetching, cleaning, scaling and
//! train/test splitting.

mod clean;
mod fetch;
mod pipeline;
mod scaler;
mod source;
mod split;

use thiserror::Error;

pub use clean::{clean, parse_bool, parse_cell, Cell, CleanReport, CleanTable, DroppedRow};
pub use fetch::{fetch, RawTable};
pub use pipeline::{
    load_ingest_artifacts, run_ingestion, IngestArtifacts, IngestMeta, LoadedIngest, INGEST_META,
    SCALERS_FILE, TEST_FILE, TRAIN_FILE,
};
pub use scaler::{fingerprint_rows, fit_scalers, ColumnScaler, ScalerSet, Transform};
pub use source::{
    validate_source, ConnectorConfig, DataSource, API_KEY_PREFIX, CONSUMER_HEADER, PROVIDER_HEADER,
};
pub use split::{split, split_indices, train_size, Matrices, Partition, SplitDataset};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("unrecognized data source `{0}`")]
    UnrecognizedSource(String),
    #[error("fetching from `{0}` is not supported")]
    UnsupportedSource(String),
    #[error("invalid connector configuration: {0}")]
    Connector(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("http error: {0}")]
    Http(String),
    #[error("http status {0}")]
    HttpStatus(u16),
    #[error("malformed csv at line {line}: {message}")]
    MalformedCsv { line: u64, message: String },
    #[error("input is missing schema columns {0:?}")]
    SchemaMismatch(Vec<String>),
    #[error("table is empty")]
    EmptyTable,
    #[error("column `{0}` has no value to use")]
    MissingValue(String),
    #[error("value `{value}` of `{column}` was not seen during fitting")]
    UnseenCategory { column: String, value: String },
    #[error("cell {value} does not fit column `{column}`")]
    CellMismatch { column: String, value: String },
    #[error("row has {found} values, expected {expected}")]
    RowWidth { expected: usize, found: usize },
    #[error("split ratio {0} must lie strictly between 0 and 1")]
    BadRatio(f64),
    #[error("need at least 2 rows to split, found {0}")]
    TooFewRows(usize),
    #[error("artifact directory {0} is locked by another ingestion run")]
    Locked(String),
    #[error("ingestion step `{step}` failed: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: Box<IngestError>,
    },
}

impl IngestError {
    pub(crate) fn at(step: &'static str) -> impl FnOnce(IngestError) -> IngestError {
        move |source| IngestError::Step {
            step,
            source: Box::new(source),
        }
    }

    /// Pipeline step that failed, for step-tagged errors.
    pub fn step(&self) -> Option<&'static str> {
        match self {
            IngestError::Step { step, .. } => Some(step),
            _ => None,
        }
    }

    /// Underlying error with step tags removed.
    pub fn root(&self) -> &IngestError {
        match self {
            IngestError::Step { source, .. } => source.root(),
            other => other,
        }
    }
}
