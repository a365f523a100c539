use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::clean::{clean, DroppedRow};
use super::fetch::fetch;
use super::scaler::{fit_scalers, ScalerSet};
use super::source::validate_source;
use super::split::{split, Matrices, SplitDataset};
use super::IngestError;
use crate::config::RunConfig;
use crate::domain::{DatasetSchema, Task};

pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";
pub const SCALERS_FILE: &str = "scalers.json";
pub const INGEST_META: &str = "ingest_meta.json";
const LOCK_FILE: &str = ".ingest.lock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestMeta {
    pub source: String,
    pub task: Task,
    pub schema: DatasetSchema,
    pub rows_in: usize,
    pub rows_retained: usize,
    pub dropped: Vec<DroppedRow>,
    pub missing_optional: Vec<(String, usize)>,
    pub train_rows: usize,
    pub test_rows: usize,
    pub split_ratio: f64,
    pub seed: u64,
    pub scalers_fingerprint: String,
    pub feature_columns: Vec<String>,
    pub target_columns: Vec<String>,
}

/// Paths of the files produced by one ingestion run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestArtifacts {
    pub train_data: PathBuf,
    pub test_data: PathBuf,
    pub scalers: PathBuf,
    pub meta: PathBuf,
}

impl IngestArtifacts {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            train_data: dir.join(TRAIN_FILE),
            test_data: dir.join(TEST_FILE),
            scalers: dir.join(SCALERS_FILE),
            meta: dir.join(INGEST_META),
        }
    }

    pub fn exist(&self) -> bool {
        [&self.train_data, &self.test_data, &self.scalers, &self.meta]
            .iter()
            .all(|p| p.is_file())
    }
}

struct DirLock(PathBuf);

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self, IngestError> {
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(IngestError::Locked(dir.display().to_string()))
            }
            Err(e) => Err(IngestError::Io(format!("{}: {e}", path.display()))),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |e| IngestError::Io(format!("{}: {e}", path.display()))
}

fn write_matrix(path: &Path, header: &[String], m: &Matrices) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| IngestError::Io(e.to_string());
    w.write_record(header).map_err(csv_err)?;
    for (x, y) in m.x.rows().into_iter().zip(m.y.rows()) {
        let record: Vec<String> = x.iter().chain(y.iter()).map(|v| format!("{v}")).collect();
        w.write_record(&record).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| IngestError::Io(e.to_string()))?;
    fs::write(path, bytes).map_err(io_err(path))
}

fn read_matrix(path: &Path, n_features: usize, n_targets: usize) -> Result<Matrices, IngestError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let table = super::fetch::RawTable::from_csv_reader(std::io::BufReader::new(file))?;
    if table.header.len() != n_features + n_targets {
        return Err(IngestError::RowWidth {
            expected: n_features + n_targets,
            found: table.header.len(),
        });
    }
    let rows = table
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.iter()
                .map(|c| c.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| IngestError::MalformedCsv {
                    line: i as u64 + 2,
                    message: e.to_string(),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Matrices::from_rows(&rows, n_features))
}

/// Runs fetch, clean, split, scaler fitting (training rows only) and
/// encoding, then writes `train.csv`, `test.csv`, `scalers.json` and
/// `ingest_meta.json` into `dir`.
pub fn run_ingestion(config: &RunConfig, dir: &Path) -> Result<IngestArtifacts, IngestError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let _lock = DirLock::acquire(dir)?;

    let source = validate_source(&config.input_filepath).map_err(IngestError::at("validate_source"))?;
    let connector = config
        .connector()
        .map_err(|e| IngestError::Connector(e.to_string()))
        .map_err(IngestError::at("validate_source"))?;
    let schema = config
        .schema()
        .map_err(|e| IngestError::SchemaMismatch(vec![e.to_string()]))
        .map_err(IngestError::at("validate_source"))?;

    log::info!("ingesting {source}");
    let raw = fetch(&source, connector.as_ref()).map_err(IngestError::at("fetch"))?;
    let table = clean(&raw, &schema).map_err(IngestError::at("clean"))?;
    log::info!(
        "cleaned {} rows, retained {}",
        table.report.rows_in,
        table.report.rows_retained
    );

    let (train_rows, test_rows) =
        split(&table.rows, config.split_ratio, config.seed).map_err(IngestError::at("split"))?;
    let scalers = fit_scalers(&table.with_rows(train_rows.clone())).map_err(IngestError::at("fit_scalers"))?;

    let encode = |rows: &[Vec<super::Cell>]| -> Result<Matrices, IngestError> {
        let encoded = rows
            .iter()
            .map(|r| scalers.transform(r))
            .collect::<Result<Vec<_>, _>>()?;
        let mut m = Matrices::from_rows(&encoded, scalers.feature_width());
        if encoded.is_empty() {
            m.y = ndarray::Array2::zeros((0, scalers.target_width()));
        }
        Ok(m)
    };
    let train = encode(&train_rows).map_err(IngestError::at("transform"))?;
    let test = encode(&test_rows).map_err(IngestError::at("transform"))?;

    let feature_columns = scalers.encoded_feature_names();
    let target_columns = scalers.encoded_target_names();
    let header: Vec<String> = feature_columns.iter().chain(&target_columns).cloned().collect();
    let artifacts = IngestArtifacts::in_dir(dir);
    let meta = IngestMeta {
        source: source.to_string(),
        task: schema.task,
        schema,
        rows_in: table.report.rows_in,
        rows_retained: table.report.rows_retained,
        dropped: table.report.dropped.clone(),
        missing_optional: table.report.missing_optional.clone(),
        train_rows: train.len(),
        test_rows: test.len(),
        split_ratio: config.split_ratio,
        seed: config.seed,
        scalers_fingerprint: scalers.fingerprint.clone(),
        feature_columns,
        target_columns,
    };
    (|| {
        write_matrix(&artifacts.train_data, &header, &train)?;
        write_matrix(&artifacts.test_data, &header, &test)?;
        scalers.save(&artifacts.scalers)?;
        let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
        fs::write(&artifacts.meta, text).map_err(io_err(&artifacts.meta))
    })()
    .map_err(IngestError::at("persist"))?;
    Ok(artifacts)
}

/// Ingestion outputs loaded back from disk.
#[derive(Debug, Clone)]
pub struct LoadedIngest {
    pub meta: IngestMeta,
    pub scalers: ScalerSet,
    pub data: SplitDataset,
}

pub fn load_ingest_artifacts(artifacts: &IngestArtifacts) -> Result<LoadedIngest, IngestError> {
    let text = fs::read_to_string(&artifacts.meta).map_err(io_err(&artifacts.meta))?;
    let meta: IngestMeta =
        serde_json::from_str(&text).map_err(|e| IngestError::Io(format!("{}: {e}", artifacts.meta.display())))?;
    let scalers = ScalerSet::load(&artifacts.scalers)?;
    if scalers.fingerprint != meta.scalers_fingerprint {
        return Err(IngestError::Io(format!(
            "{}: fingerprint does not match ingestion metadata",
            artifacts.scalers.display()
        )));
    }
    let nf = meta.feature_columns.len();
    let nt = meta.target_columns.len();
    let train = read_matrix(&artifacts.train_data, nf, nt)?;
    let test = read_matrix(&artifacts.test_data, nf, nt)?;
    Ok(LoadedIngest {
        data: SplitDataset {
            train,
            test,
            split_ratio: meta.split_ratio,
            seed: meta.seed,
            feature_names: meta.feature_columns.clone(),
            target_names: meta.target_columns.clone(),
        },
        scalers,
        meta,
    })
}
