use std::io::Read;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::source::{ConnectorConfig, DataSource, CONSUMER_HEADER, PROVIDER_HEADER};
use super::IngestError;
use crate::domain::canonical_column_name;

/// Untyped CSV contents: header plus string cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn new(header: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self, IngestError> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != header.len() {
                return Err(IngestError::MalformedCsv {
                    line: i as u64 + 2,
                    message: format!("expected {} fields, found {}", header.len(), row.len()),
                });
            }
        }
        Ok(Self { header, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h.trim() == name || canonical_column_name(h) == name)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, IngestError> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(reader);
        let header = csv
            .headers()
            .map_err(csv_error)?
            .iter()
            .map(|h| h.trim().trim_start_matches('\u{feff}').to_string())
            .collect::<Vec<_>>();
        if header.iter().all(|h| h.is_empty()) {
            return Err(IngestError::MalformedCsv {
                line: 1,
                message: "missing header row".into(),
            });
        }
        let mut rows = Vec::new();
        for record in csv.records() {
            let record = record.map_err(csv_error)?;
            rows.push(record.iter().map(str::to_string).collect());
        }
        Self::new(header, rows)
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }
}

fn csv_error(e: csv::Error) -> IngestError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IngestError::Io(io.to_string()),
        other => IngestError::MalformedCsv {
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Loads a raw table from a local CSV file or an HTTP endpoint.
///
/// When a connector is supplied, HTTP requests carry its key in
/// `Authorization` plus the two agent-id headers; without one, no
/// credential headers are sent.
pub fn fetch(source: &DataSource, connector: Option<&ConnectorConfig>) -> Result<RawTable, IngestError> {
    match source {
        DataSource::LocalFile(path) => {
            let file = std::fs::File::open(path)
                .map_err(|e| IngestError::Io(format!("{}: {e}", path.display())))?;
            RawTable::from_csv_reader(std::io::BufReader::new(file))
        }
        DataSource::HttpEndpoint(url) => {
            if let Some(c) = connector {
                c.validate()?;
            }
            let client = reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(30))
                .build()
                .map_err(|e| IngestError::Http(e.to_string()))?;
            let mut request = client.get(url.as_str());
            if let Some(c) = connector {
                request = request
                    .header(reqwest::header::AUTHORIZATION, &c.authorization)
                    .header(CONSUMER_HEADER, &c.consumer_agent_id)
                    .header(PROVIDER_HEADER, &c.provider_agent_id);
            }
            let response = request.send().map_err(|e| IngestError::Http(e.to_string()))?;
            let status = response.status();
            if !status.is_success() {
                return Err(IngestError::HttpStatus(status.as_u16()));
            }
            let body = response.bytes().map_err(|e| IngestError::Http(e.to_string()))?;
            RawTable::from_csv_reader(body.as_ref())
        }
        DataSource::ConnectionString(dsn) => Err(IngestError::UnsupportedSource(dsn.clone())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_local_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "a,b\n1,2\n3,4\n5,\"6\"\n").unwrap();
        let table = fetch(&DataSource::LocalFile(path), None).unwrap();
        assert_eq!(table.header, vec!["a", "b"]);
        assert_eq!(table.len(), 3);
        assert_eq!(table.rows[2], vec!["5", "6"]);
    }

    #[test]
    fn ragged_csv_is_malformed() {
        let err = RawTable::from_csv_reader("a,b\n1,2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, IngestError::MalformedCsv { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = fetch(&DataSource::LocalFile("/definitely/not/here.csv".into()), None).unwrap_err();
        assert!(matches!(err, IngestError::Io(_)));
    }

    #[test]
    fn dsn_fetch_is_unsupported() {
        let err = fetch(&DataSource::ConnectionString("postgres://x/y".into()), None).unwrap_err();
        assert!(matches!(err, IngestError::UnsupportedSource(_)));
    }

    #[test]
    fn csv_round_trip() {
        let t = RawTable::new(
            vec!["name".into(), "note".into()],
            vec![vec!["a".into(), "x, \"y\"".into()]],
        )
        .unwrap();
        let back = RawTable::from_csv_reader(t.to_csv_string().as_bytes()).unwrap();
        assert_eq!(back, t);
    }
}
