//! HTTP ingestion against a minimal in-process data-space provider.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use enerfit_core::config::{parse_config_document, validate_run_config};
use enerfit_core::fixtures::{fixture_config_yaml, retrofit_fixture_csv, DEFAULT_SEARCH};
use enerfit_core::ingest::{fetch, run_ingestion, validate_source, ConnectorConfig, IngestError};
use enerfit_core::orchestrate::Service;

/// Serves `body` with `status` to one request and reports its headers,
/// lower-cased.
fn provider(status: u16, body: String) -> (String, mpsc::Receiver<HashMap<String, String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/data-app-path/openapi/v1/endpoint", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut headers = HashMap::new();
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        loop {
            line.clear();
            reader.read_line(&mut line).unwrap();
            let trimmed = line.trim_end();
            if trimmed.is_empty() {
                break;
            }
            if let Some((k, v)) = trimmed.split_once(':') {
                headers.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
            }
        }
        tx.send(headers).unwrap();
        let mut stream = stream;
        write!(
            stream,
            "HTTP/1.1 {status} X\r\nContent-Type: text/csv\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        )
        .unwrap();
    });
    (url, rx)
}

#[test]
fn connector_headers_are_sent() {
    let (url, headers) = provider(200, "a,b\n1,2\n".into());
    let connector = ConnectorConfig::new("APIKEY-s3cret", "urn:consumer", "urn:provider").unwrap();
    let table = fetch(&validate_source(&url).unwrap(), Some(&connector)).unwrap();
    assert_eq!(table.rows, vec![vec!["1".to_string(), "2".to_string()]]);
    let h = headers.recv().unwrap();
    assert_eq!(h["authorization"], "APIKEY-s3cret");
    assert_eq!(h["x-consumer-agent-id"], "urn:consumer");
    assert_eq!(h["x-provider-agent-id"], "urn:provider");
}

#[test]
fn no_credentials_without_connector() {
    let (url, headers) = provider(200, "a\n1\n".into());
    fetch(&validate_source(&url).unwrap(), None).unwrap();
    let h = headers.recv().unwrap();
    assert!(!h.contains_key("authorization"));
    assert!(!h.contains_key("x-consumer-agent-id"));
}

#[test]
fn provider_errors_surface_status() {
    let (url, _h) = provider(503, String::new());
    assert_eq!(fetch(&validate_source(&url).unwrap(), None).unwrap_err(), IngestError::HttpStatus(503));
}

#[test]
fn ingestion_over_http_with_connector_credentials() {
    let (url, headers) = provider(200, retrofit_fixture_csv(42));
    let mut yaml = fixture_config_yaml(Service::Retrofit, std::path::Path::new(&url), DEFAULT_SEARCH);
    yaml.push_str("authorization: APIKEY-xxxxxxxx\nconsumer_agent_id: \"urn:ids:consumer\"\nprovider_agent_id: \"urn:ids:provider\"\n");
    let config = validate_run_config(&parse_config_document(&yaml).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let artifacts = run_ingestion(&config, dir.path()).unwrap();
    assert!(artifacts.exist());
    assert_eq!(headers.recv().unwrap()["authorization"], "APIKEY-xxxxxxxx");
}
